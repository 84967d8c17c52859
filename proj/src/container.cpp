#include "revdict/container.hpp"

#include <bit>
#include <cstring>

#include "revdict/data.hpp"
#include "revdict/error.hpp"

namespace revdict {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'R', 'E', 'V', 'D', 'I', 'C', 'T', '\0'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string_view take(std::uint64_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw DataError("corrupt artifact: truncated");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_container(const Container& c) {
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, Container::kVersion);
  const std::string header = c.header.dump();
  put_u64(out, header.size());
  out += header;
  put_u64(out, c.tensors.size());
  for (const auto& t : c.tensors) {
    put_u64(out, t.size());
    for (double v : t) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  put_u64(out, fnv1a(out));
  return out;
}

Container decode_container(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) {
    throw DataError("corrupt artifact: bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != Container::kVersion) {
    throw DataError("artifact format version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(Container::kVersion) + ")");
  }
  Container c;
  const std::string_view header = r.take(r.u64());
  try {
    c.header = json::parse(header);
  } catch (const json::parse_error&) {
    throw DataError("corrupt artifact: unreadable header");
  }
  const std::uint64_t count = r.u64();
  if (count > r.remaining() / 8) throw DataError("corrupt artifact: truncated");
  c.tensors.resize(count);
  for (auto& t : c.tensors) {
    const std::uint64_t n = r.u64();
    if (n > r.remaining() / 8) throw DataError("corrupt artifact: truncated");
    t.resize(n);
    for (auto& v : t) v = std::bit_cast<double>(r.u64());
  }
  const std::size_t body_end = r.pos();
  const std::uint64_t checksum = r.u64();
  if (checksum != fnv1a(bytes.substr(0, body_end))) throw DataError("corrupt artifact: checksum mismatch");
  if (r.remaining() != 0) throw DataError("corrupt artifact: trailing bytes");
  return c;
}

void write_container(const std::filesystem::path& path, const Container& c) {
  write_text_file(path, encode_container(c));
}

Container read_container(const std::filesystem::path& path) {
  try {
    return decode_container(read_text_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

json describe_stack(const FeedForwardStack& stack, std::vector<std::vector<double>>& tensors) {
  json layers = json::array();
  for (const auto& l : stack.layers()) {
    layers.push_back({{"d_in", l.d_in()}, {"d_out", l.d_out()}, {"activation", to_string(l.activation)}});
    auto w = l.weights.values();
    tensors.emplace_back(w.begin(), w.end());
    tensors.push_back(l.bias);
  }
  return layers;
}

FeedForwardStack restore_stack(const json& layers, const std::vector<std::vector<double>>& tensors,
                               std::size_t& next) {
  if (!layers.is_array() || layers.empty()) throw DataError("corrupt artifact: no layer table");
  std::vector<DenseLayer> out;
  try {
    for (const auto& spec : layers) {
      const auto d_in = spec.at("d_in").get<std::size_t>();
      const auto d_out = spec.at("d_out").get<std::size_t>();
      DenseLayer layer(d_in, d_out, activation_from_string(spec.at("activation").get<std::string>()));
      if (next + 2 > tensors.size()) throw DataError("corrupt artifact: missing tensors");
      const auto& w = tensors[next++];
      const auto& b = tensors[next++];
      if (w.size() != d_in * d_out || b.size() != d_out) throw DataError("corrupt artifact: tensor size mismatch");
      std::copy(w.begin(), w.end(), layer.weights.values().begin());
      layer.bias = b;
      out.push_back(std::move(layer));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("corrupt artifact: bad layer table: ") + e.what());
  }
  return FeedForwardStack(std::move(out));
}

}  // namespace revdict
