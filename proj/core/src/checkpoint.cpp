#include "cva/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cva {

namespace {

constexpr const char* kMetadataKey = "__metadata__";

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_u64_le(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

void put_f64_le(std::string& out, double d) { put_u64_le(out, std::bit_cast<std::uint64_t>(d)); }

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header = nlohmann::json::object();
  header[kMetadataKey] = ckpt.metadata;
  std::uint64_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    if (t.name == kMetadataKey) throw CheckpointError("reserved tensor name: " + t.name);
    if (header.contains(t.name)) throw CheckpointError("duplicate tensor name: " + t.name);
    header[t.name] = {{"shape", t.tensor.shape()}, {"offset", offset}};
    offset += t.tensor.size() * sizeof(double);
  }
  const std::string header_text = header.dump();
  std::string out;
  out.reserve(8 + header_text.size() + offset);
  put_u64_le(out, header_text.size());
  out += header_text;
  for (const auto& t : ckpt.tensors) {
    for (double v : t.tensor.data()) put_f64_le(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8) throw CheckpointError("checkpoint truncated: no header length");
  const std::uint64_t header_len = get_u64_le(bytes, 0);
  if (header_len > bytes.size() - 8) throw CheckpointError("checkpoint truncated: header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8,
                                   bytes.begin() + 8 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (!header.is_object()) throw CheckpointError("checkpoint header must be a JSON object");
  const std::size_t data_start = 8 + header_len;
  const std::size_t data_len = bytes.size() - data_start;

  struct Entry {
    std::string name;
    Shape shape;
    std::uint64_t offset;
  };
  std::vector<Entry> entries;
  Checkpoint ckpt;
  for (const auto& [name, value] : header.items()) {
    if (name == kMetadataKey) {
      ckpt.metadata = value;
      continue;
    }
    try {
      entries.push_back({name, value.at("shape").get<Shape>(), value.at("offset").get<std::uint64_t>()});
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError("bad header entry for '" + name + "': " + e.what());
    }
  }
  // Data order is offset order, which is registration order.
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.offset < b.offset; });
  std::uint64_t expected = 0;
  for (auto& e : entries) {
    const std::size_t n = numel(e.shape);
    if (e.offset != expected) {
      throw CheckpointError("tensor '" + e.name + "' has offset " + std::to_string(e.offset) +
                            ", expected " + std::to_string(expected));
    }
    if (e.offset + n * sizeof(double) > data_len) {
      throw CheckpointError("tensor '" + e.name + "' extends past end of file");
    }
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
      values[i] = std::bit_cast<double>(get_u64_le(bytes, data_start + e.offset + i * 8));
    }
    ckpt.tensors.push_back({e.name, Tensor(e.shape, std::move(values))});
    expected += n * sizeof(double);
  }
  if (expected != data_len) throw CheckpointError("trailing bytes after tensor data");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace cva
