#include "mtf/core/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mtf {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'M', 'F', 'K', '1'};

template <class U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  template <class U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, data_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  const char* take(std::size_t n) {
    need(n);
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw IoError(path_ + ": truncated checkpoint");
  }
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

template <class T>
std::string encode_checkpoint(const std::string& spec_text, std::span<const Parameter<T>> params) {
  std::string out(kMagic, 4);
  put<std::uint8_t>(out, sizeof(T));
  put_string(out, spec_text);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_string(out, p.name);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(p.value.shape().rank()));
    for (std::size_t d : p.value.shape().dims()) put<std::uint64_t>(out, d);
  }
  for (const auto& p : params) {
    out.append(reinterpret_cast<const char*>(p.value.ptr()), p.value.size() * sizeof(T));
  }
  return out;
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const std::string& spec_text,
                     std::span<const Parameter<T>> params) {
  const std::string bytes = encode_checkpoint(spec_text, params);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(path.string() + ": cannot open for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError(path.string() + ": write failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path.string() + ": cannot open checkpoint");
  std::ostringstream ss;
  ss << f.rdbuf();
  Reader r(ss.str(), path.string());
  if (std::memcmp(r.take(4), kMagic, 4) != 0) throw IoError(path.string() + ": not a checkpoint (bad magic)");
  Checkpoint ck;
  ck.precision = r.get<std::uint8_t>();
  if (ck.precision != 4 && ck.precision != 8) {
    throw IoError(path.string() + ": unsupported precision flag " + std::to_string(ck.precision));
  }
  ck.spec_text = r.get_string();
  const auto count = r.get<std::uint32_t>();
  std::vector<Shape> shapes;
  for (std::uint32_t i = 0; i < count; ++i) {
    ck.names.push_back(r.get_string());
    const auto rank = r.get<std::uint8_t>();
    std::vector<std::uint64_t> dims(rank);
    for (auto& d : dims) d = r.get<std::uint64_t>();
    try {
      shapes.emplace_back(dims.begin(), dims.end());
    } catch (const ShapeError& e) {
      throw IoError(path.string() + ": block '" + ck.names.back() + "': " + e.what());
    }
  }
  for (const Shape& s : shapes) {
    std::vector<double> v(s.size());
    if (ck.precision == 4) {
      const char* p = r.take(s.size() * 4);
      for (std::size_t i = 0; i < v.size(); ++i) {
        float x;
        std::memcpy(&x, p + 4 * i, 4);
        v[i] = x;
      }
    } else {
      std::memcpy(v.data(), r.take(s.size() * 8), s.size() * 8);
    }
    ck.values.emplace_back(s, std::move(v));
  }
  if (!r.done()) throw IoError(path.string() + ": trailing bytes after checkpoint payload");
  return ck;
}

template std::string encode_checkpoint<float>(const std::string&, std::span<const Parameter<float>>);
template std::string encode_checkpoint<double>(const std::string&, std::span<const Parameter<double>>);
template void save_checkpoint<float>(const std::filesystem::path&, const std::string&, std::span<const Parameter<float>>);
template void save_checkpoint<double>(const std::filesystem::path&, const std::string&,
                                      std::span<const Parameter<double>>);

}  // namespace mtf
