#include "ernet/model_io.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace ernet {

std::uint32_t crc32_bytes(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = crc32(crc, bytes.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_f32(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get_u32(p)); }

std::string layer_line(const LayerSpec& s) {
  std::ostringstream os;
  os << "layer " << s.name << ' ' << layer_kind_name(s.kind);
  if (s.filters) os << " filters=" << s.filters;
  if (s.kernel) os << " kernel=" << s.kernel;
  if (s.kind == LayerKind::dropout) os << " rate=" << s.rate;
  if (s.projection) os << " projection=1";
  return os.str();
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) lines.push_back(line);
  return lines;
}

// Value of "key v1 v2 ..." lines; FormatError when absent.
std::string header_value(const std::vector<std::string>& lines, const std::string& key) {
  for (const auto& l : lines)
    if (l.rfind(key + " ", 0) == 0) return l.substr(key.size() + 1);
  throw FormatError("model header is missing '" + key + "'");
}

}  // namespace

template <typename T>
std::string model_header(const ModelGraph<T>& g) {
  std::ostringstream os;
  os << "name " << g.name << '\n';
  os << "variant " << variant_name(g.variant) << '\n';
  os << "input " << g.input_shape[0] << ' ' << g.input_shape[1] << ' ' << g.input_shape[2] << '\n';
  os << "classes " << g.class_count << '\n';
  os << "precision f32\n";
  os << "layers " << g.layers.size() << '\n';
  for (const auto& l : g.layers) os << layer_line(l.spec) << '\n';
  const auto params = g.parameters();
  os << "params " << params.size() << '\n';
  for (const auto& p : params) {
    os << "param " << p.name;
    for (Extent e : p.tensor->shape()) os << ' ' << e;
    os << '\n';
  }
  return os.str();
}

template <typename T>
std::vector<std::uint8_t> serialize_model(const ModelGraph<T>& g) {
  infer_shapes(g, 1);
  const std::string header = model_header(g);
  std::vector<std::uint8_t> out(std::begin(kModelMagic), std::end(kModelMagic));
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  const std::size_t payload_begin = out.size();
  for (const auto& p : g.parameters())
    for (T v : p.tensor->data()) put_f32(out, static_cast<float>(v));
  const std::uint32_t crc =
      crc32_bytes(std::span<const std::uint8_t>(out.data() + payload_begin, out.size() - payload_begin));
  put_u32(out, crc);
  return out;
}

template <typename T>
ModelGraph<T> deserialize_model(std::span<const std::uint8_t> bytes, Rng& rng) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kModelMagic, 8) != 0)
    throw FormatError("not a model file (bad magic)");
  const std::uint32_t header_len = get_u32(bytes.data() + 8);
  if (bytes.size() < 12 + static_cast<std::size_t>(header_len) + 4) throw FormatError("model file truncated in header");
  const std::string header(reinterpret_cast<const char*>(bytes.data() + 12), header_len);
  const auto lines = split_lines(header);

  ModelGraph<T> g;
  try {
    const Variant variant = parse_variant(header_value(lines, "variant"));
    Shape input(3);
    std::istringstream is(header_value(lines, "input"));
    is >> input[0] >> input[1] >> input[2];
    if (!is) throw FormatError("malformed input record in model header");
    const Extent classes = std::stoll(header_value(lines, "classes"));
    if (header_value(lines, "precision") != "f32") throw FormatError("unsupported payload precision");
    g = build_model<T>(variant, input, classes, rng);
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("unusable model header: ") + e.what());
  }
  g.name = header_value(lines, "name");
  if (model_header(g) != header) throw FormatError("model header does not match the rebuilt architecture");

  auto params = g.parameters();
  std::size_t count = 0;
  for (const auto& p : params) count += p.tensor->size();
  const std::size_t payload_begin = 12 + header_len;
  const std::size_t expected = payload_begin + 4 * count + 4;
  if (bytes.size() < expected) throw FormatError("model payload truncated");
  if (bytes.size() > expected) throw FormatError("trailing bytes after model checksum");

  const std::uint32_t stored = get_u32(bytes.data() + payload_begin + 4 * count);
  const std::uint32_t actual = crc32_bytes(bytes.subspan(payload_begin, 4 * count));
  if (stored != actual) throw FormatError("model payload checksum mismatch");

  const std::uint8_t* p = bytes.data() + payload_begin;
  for (auto& ref : params)
    for (T& v : ref.tensor->data()) {
      v = static_cast<T>(get_f32(p));
      p += 4;
    }
  return g;
}

template <typename T>
void save_model(const ModelGraph<T>& g, const std::filesystem::path& path) {
  const auto bytes = serialize_model(g);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

template <typename T>
ModelGraph<T> load_model(const std::filesystem::path& path, Rng& rng) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open model file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return deserialize_model<T>(bytes, rng);
}

#define ERNET_INSTANTIATE_IO(T)                                                              \
  template std::string model_header(const ModelGraph<T>&);                                   \
  template std::vector<std::uint8_t> serialize_model(const ModelGraph<T>&);                  \
  template ModelGraph<T> deserialize_model(std::span<const std::uint8_t>, Rng&);             \
  template void save_model(const ModelGraph<T>&, const std::filesystem::path&);              \
  template ModelGraph<T> load_model(const std::filesystem::path&, Rng&);

ERNET_INSTANTIATE_IO(float)
ERNET_INSTANTIATE_IO(double)

#undef ERNET_INSTANTIATE_IO

}  // namespace ernet
