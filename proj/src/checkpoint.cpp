#include "ptft/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include "ptft/error.hpp"
#include "ptft/io.hpp"

namespace ptft {
namespace {

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
    }
}

std::uint64_t get_u64(std::string_view bytes, std::size_t offset) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + static_cast<std::size_t>(i)]))
             << (8 * i);
    }
    return v;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
    nlohmann::json table = nlohmann::json::array();
    for (const auto& [name, tensor] : checkpoint.params.entries()) {
        table.push_back({{"name", name}, {"shape", tensor.shape()}});
    }
    const nlohmann::json header{{"format", kCheckpointFormat},
                                {"version", kCheckpointVersion},
                                {"model_config", checkpoint.config.to_json()},
                                {"parameters", table},
                                {"metadata", checkpoint.metadata}};
    const std::string header_text = header.dump();

    std::string out;
    out.reserve(8 + header_text.size() + 8 * checkpoint.params.scalar_count());
    put_u64(out, header_text.size());
    out += header_text;
    for (const auto& [name, tensor] : checkpoint.params.entries()) {
        for (double v : tensor.values()) {
            put_u64(out, std::bit_cast<std::uint64_t>(v));
        }
    }
    return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
    if (bytes.size() < 8) {
        throw InvariantError("checkpoint: file too short");
    }
    const std::uint64_t header_len = get_u64(bytes, 0);
    if (header_len > bytes.size() - 8) {
        throw InvariantError("checkpoint: header length exceeds file size");
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(8, header_len));
    } catch (const nlohmann::json::parse_error& e) {
        throw InvariantError(std::string{"checkpoint: malformed header: "} + e.what());
    }
    if (header.value("format", "") != kCheckpointFormat) {
        throw InvariantError("checkpoint: not a ptft checkpoint");
    }
    if (header.value("version", 0) != kCheckpointVersion) {
        throw InvariantError("checkpoint: unsupported version " + header.value("version", nlohmann::json{}).dump());
    }

    Checkpoint ck;
    ck.config = ModelConfig::from_json(header.at("model_config"));
    ck.metadata = header.value("metadata", nlohmann::json::object());
    std::size_t offset = 8 + header_len;
    for (const auto& entry : header.at("parameters")) {
        Shape shape = entry.at("shape").get<Shape>();
        Tensor t{shape};
        if (bytes.size() - offset < 8 * t.size()) {
            throw InvariantError("checkpoint: body truncated at '" + entry.at("name").get<std::string>() + "'");
        }
        for (std::size_t i = 0; i < t.size(); ++i) {
            t[i] = std::bit_cast<double>(get_u64(bytes, offset));
            offset += 8;
        }
        ck.params.add(entry.at("name").get<std::string>(), std::move(t));
    }
    if (offset != bytes.size()) {
        throw InvariantError("checkpoint: trailing bytes after body");
    }
    ck.config.validate();
    validate_parameters(ck.config, ck.params);
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    write_text_atomic(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return deserialize_checkpoint(read_text_file(path));
}

}  // namespace ptft
