#include "numlm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "numlm/errors.hpp"

namespace numlm::ckpt {

namespace {

constexpr std::string_view kMagic = "numlm-ckpt 1";

void append_le(std::string& out, double value) {
  auto bits = std::bit_cast<std::uint64_t>(value);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint64_t read_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t save(const std::filesystem::path& path, const ad::ParamStore& params, const Metadata& meta) {
  std::ostringstream header;
  header << kMagic << '\n';
  for (const auto& [k, v] : meta) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw CheckpointError("metadata entry '" + k + "' contains a separator");
    }
    header << "meta " << k << ' ' << v << '\n';
  }
  std::string payload;
  for (const auto& [name, t] : params.entries()) {
    header << "tensor " << name << ' ' << t.rank();
    for (auto e : t.shape()) header << ' ' << e;
    header << '\n';
    for (double v : t.data()) append_le(payload, v);
  }
  header << "end\n";

  const auto checksum =
      fnv1a64({reinterpret_cast<const unsigned char*>(payload.data()), payload.size()});
  std::string trailer;
  for (int i = 0; i < 8; ++i) trailer.push_back(static_cast<char>((checksum >> (8 * i)) & 0xff));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  const auto h = header.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  out.write(trailer.data(), static_cast<std::streamsize>(trailer.size()));
  if (!out) throw CheckpointError("write to '" + path.string() + "' failed");
  return checksum;
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw CheckpointError("truncated checkpoint header");
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };

  if (next_line() != kMagic) throw CheckpointError("'" + path.string() + "' is not a numlm checkpoint");

  Checkpoint ck;
  std::vector<std::pair<std::string, ad::Shape>> decls;
  for (;;) {
    const auto line = next_line();
    if (line == "end") break;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "meta") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      ck.meta[key] = value;
    } else if (kind == "tensor") {
      std::string name;
      std::size_t rank = 0;
      ls >> name >> rank;
      ad::Shape shape(rank);
      for (auto& e : shape) ls >> e;
      if (!ls) throw CheckpointError("malformed tensor declaration: " + line);
      decls.emplace_back(std::move(name), std::move(shape));
    } else {
      throw CheckpointError("unexpected header line: " + line);
    }
  }

  std::size_t total = 0;
  for (const auto& [_, shape] : decls) total += ad::shape_numel(shape);
  if (bytes.size() - pos != total * 8 + 8) {
    throw CheckpointError("payload size mismatch in '" + path.string() + "'");
  }
  const auto* payload = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  ck.checksum = fnv1a64({payload, total * 8});
  if (ck.checksum != read_u64_le(payload + total * 8)) {
    throw CheckpointError("checksum mismatch in '" + path.string() + "'");
  }

  std::size_t offset = 0;
  for (auto& [name, shape] : decls) {
    const auto n = ad::shape_numel(shape);
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i, offset += 8) {
      values[i] = std::bit_cast<double>(read_u64_le(payload + offset));
    }
    ck.params.add(name, ad::Tensor::from(shape, std::move(values), true));
  }
  return ck;
}

void assign(ad::ParamStore& dst, const ad::ParamStore& src) {
  if (dst.entries().size() != src.entries().size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(src.entries().size()) + " tensors, model expects " +
                          std::to_string(dst.entries().size()));
  }
  for (auto& [name, t] : dst.entries()) {
    const auto& s = src.get(name);
    if (s.shape() != t.shape()) {
      throw CheckpointError("shape mismatch for '" + name + "': " + ad::shape_str(s.shape()) + " vs " +
                            ad::shape_str(t.shape()));
    }
    std::copy(s.data().begin(), s.data().end(), t.mutable_data().begin());
  }
}

}  // namespace numlm::ckpt
