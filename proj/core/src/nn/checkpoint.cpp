#include "habi/nn/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <fstream>
#include <iterator>

#include "habi/errors.hpp"

namespace habi::nn {
namespace {

constexpr std::array<std::uint8_t, 4> kMagic = {'H', 'A', 'B', 'I'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void magic() { out_.insert(out_.end(), kMagic.begin(), kMagic.end()); }

  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  bool done() const { return pos_ == in_.size(); }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void magic() {
    need(4);
    if (!std::equal(kMagic.begin(), kMagic.end(), in_.begin() + static_cast<std::ptrdiff_t>(pos_))) {
      throw FormatError("container: bad magic at byte " + std::to_string(pos_));
    }
    pos_ += 4;
  }
  /// Guard element counts against the remaining bytes before allocating.
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) {
      throw FormatError("container: truncated at byte " + std::to_string(pos_) + " (need " +
                        std::to_string(n) + " more)");
    }
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

Activation checked_activation(std::uint32_t raw) {
  if (raw > static_cast<std::uint32_t>(Activation::kTanh)) {
    throw FormatError("container: unknown activation code " + std::to_string(raw));
  }
  return static_cast<Activation>(raw);
}

std::string_view kind_name(SectionKind k) {
  switch (k) {
    case SectionKind::kMlp:
      return "mlp";
    case SectionKind::kF64:
      return "f64";
    case SectionKind::kU64:
      return "u64";
    case SectionKind::kF32:
      return "f32";
    case SectionKind::kText:
      return "text";
  }
  return "?";
}

}  // namespace

SectionKind Container::Section::kind() const {
  return static_cast<SectionKind>(payload.index() + 1);
}

void Container::put(std::string name, Payload payload) {
  auto it = std::find_if(sections_.begin(), sections_.end(),
                         [&](const Section& s) { return s.name == name; });
  if (it != sections_.end()) {
    it->payload = std::move(payload);
  } else {
    sections_.push_back({std::move(name), std::move(payload)});
  }
}

void Container::put_mlp(std::string name, const MlpParams<float>& net) {
  net.validate();
  put(std::move(name), net);
}
void Container::put_f64(std::string name, std::vector<double> values) {
  put(std::move(name), std::move(values));
}
void Container::put_u64(std::string name, std::vector<std::uint64_t> values) {
  put(std::move(name), std::move(values));
}
void Container::put_f32(std::string name, std::vector<float> values) {
  put(std::move(name), std::move(values));
}
void Container::put_text(std::string name, std::string text) {
  put(std::move(name), std::move(text));
}

bool Container::has(std::string_view name) const {
  return std::any_of(sections_.begin(), sections_.end(),
                     [&](const Section& s) { return s.name == name; });
}

const Container::Section& Container::find(std::string_view name, SectionKind kind) const {
  for (const auto& s : sections_) {
    if (s.name != name) continue;
    if (s.kind() != kind) {
      throw FormatError("container: section '" + std::string(name) + "' is " +
                        std::string(kind_name(s.kind())) + ", expected " +
                        std::string(kind_name(kind)));
    }
    return s;
  }
  throw FormatError("container: missing section '" + std::string(name) + "'");
}

const MlpParams<float>& Container::mlp(std::string_view name) const {
  return std::get<MlpParams<float>>(find(name, SectionKind::kMlp).payload);
}
const std::vector<double>& Container::f64(std::string_view name) const {
  return std::get<std::vector<double>>(find(name, SectionKind::kF64).payload);
}
const std::vector<std::uint64_t>& Container::u64(std::string_view name) const {
  return std::get<std::vector<std::uint64_t>>(find(name, SectionKind::kU64).payload);
}
const std::vector<float>& Container::f32(std::string_view name) const {
  return std::get<std::vector<float>>(find(name, SectionKind::kF32).payload);
}
const std::string& Container::text(std::string_view name) const {
  return std::get<std::string>(find(name, SectionKind::kText).payload);
}

std::vector<std::uint8_t> Container::to_bytes() const {
  Writer w;
  for (const auto& s : sections_) {
    w.magic();
    w.u32(kContainerVersion);
    w.u32(static_cast<std::uint32_t>(s.kind()));
    w.u32(static_cast<std::uint32_t>(s.name.size()));
    w.bytes(s.name);
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, MlpParams<float>>) {
            w.u32(static_cast<std::uint32_t>(p.layers.size()));
            w.u32(static_cast<std::uint32_t>(p.hidden_activation));
            w.u32(static_cast<std::uint32_t>(p.output_activation));
            for (const auto& l : p.layers) {
              w.u32(static_cast<std::uint32_t>(l.weight.rows()));
              w.u32(static_cast<std::uint32_t>(l.weight.cols()));
              for (Index r = 0; r < l.weight.rows(); ++r) {
                for (Index c = 0; c < l.weight.cols(); ++c) w.f32(l.weight(r, c));
              }
              for (Index r = 0; r < l.bias.size(); ++r) w.f32(l.bias(r));
            }
          } else if constexpr (std::is_same_v<T, std::string>) {
            w.u32(static_cast<std::uint32_t>(p.size()));
            w.bytes(p);
          } else {
            w.u32(static_cast<std::uint32_t>(p.size()));
            for (auto v : p) {
              if constexpr (std::is_same_v<T, std::vector<double>>) w.f64(v);
              if constexpr (std::is_same_v<T, std::vector<std::uint64_t>>) w.u64(v);
              if constexpr (std::is_same_v<T, std::vector<float>>) w.f32(v);
            }
          }
        },
        s.payload);
  }
  return w.take();
}

Container Container::from_bytes(std::span<const std::uint8_t> bytes) {
  Container c;
  Reader r(bytes);
  if (r.done()) throw FormatError("container: empty input");
  while (!r.done()) {
    r.magic();
    const std::uint32_t version = r.u32();
    if (version != kContainerVersion) {
      throw FormatError("container: unsupported format version " + std::to_string(version));
    }
    const std::uint32_t kind = r.u32();
    const std::uint32_t name_len = r.u32();
    std::string name = r.bytes(name_len);
    const std::uint32_t count = r.u32();
    switch (static_cast<SectionKind>(kind)) {
      case SectionKind::kMlp: {
        MlpParams<float> net;
        net.hidden_activation = checked_activation(r.u32());
        net.output_activation = checked_activation(r.u32());
        for (std::uint32_t k = 0; k < count; ++k) {
          const std::uint32_t out = r.u32();
          const std::uint32_t in = r.u32();
          r.need((static_cast<std::size_t>(out) * in + out) * 4);
          Layer<float> l{Matrix<float>(out, in), Vector<float>(out)};
          for (std::uint32_t i = 0; i < out; ++i) {
            for (std::uint32_t j = 0; j < in; ++j) l.weight(i, j) = r.f32();
          }
          for (std::uint32_t i = 0; i < out; ++i) l.bias(i) = r.f32();
          net.layers.push_back(std::move(l));
        }
        try {
          net.validate();
        } catch (const ConfigError& e) {
          throw FormatError("container: section '" + name + "': " + e.what());
        }
        c.put(std::move(name), std::move(net));
        break;
      }
      case SectionKind::kF64: {
        r.need(static_cast<std::size_t>(count) * 8);
        std::vector<double> v(count);
        for (auto& x : v) x = r.f64();
        c.put(std::move(name), std::move(v));
        break;
      }
      case SectionKind::kU64: {
        r.need(static_cast<std::size_t>(count) * 8);
        std::vector<std::uint64_t> v(count);
        for (auto& x : v) x = r.u64();
        c.put(std::move(name), std::move(v));
        break;
      }
      case SectionKind::kF32: {
        r.need(static_cast<std::size_t>(count) * 4);
        std::vector<float> v(count);
        for (auto& x : v) x = r.f32();
        c.put(std::move(name), std::move(v));
        break;
      }
      case SectionKind::kText:
        c.put(std::move(name), r.bytes(count));
        break;
      default:
        throw FormatError("container: unknown section kind " + std::to_string(kind));
    }
  }
  return c;
}

void Container::save(const std::filesystem::path& path) const {
  const auto bytes = to_bytes();
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Container Container::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return from_bytes(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace habi::nn
