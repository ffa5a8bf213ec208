#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "habi/nn/mlp.hpp"

namespace habi::nn {

inline constexpr std::uint32_t kContainerVersion = 1;

enum class SectionKind : std::uint32_t {
  kMlp = 1,
  kF64 = 2,
  kU64 = 3,
  kF32 = 4,
  kText = 5,
};

/// Ordered set of named sections, serialized little-endian. See
/// docs/FORMATS.md for the byte layout. Networks are stored as f32; a
/// float network round-trips bit-exactly.
class Container {
 public:
  using Payload = std::variant<MlpParams<float>, std::vector<double>, std::vector<std::uint64_t>,
                               std::vector<float>, std::string>;

  struct Section {
    std::string name;
    Payload payload;

    SectionKind kind() const;
  };

  /// Insert or replace. Section order follows first insertion.
  void put_mlp(std::string name, const MlpParams<float>& net);
  void put_f64(std::string name, std::vector<double> values);
  void put_u64(std::string name, std::vector<std::uint64_t> values);
  void put_f32(std::string name, std::vector<float> values);
  void put_text(std::string name, std::string text);

  bool has(std::string_view name) const;
  /// Accessors throw FormatError if the section is missing or of another kind.
  const MlpParams<float>& mlp(std::string_view name) const;
  const std::vector<double>& f64(std::string_view name) const;
  const std::vector<std::uint64_t>& u64(std::string_view name) const;
  const std::vector<float>& f32(std::string_view name) const;
  const std::string& text(std::string_view name) const;

  const std::vector<Section>& sections() const { return sections_; }

  std::vector<std::uint8_t> to_bytes() const;
  static Container from_bytes(std::span<const std::uint8_t> bytes);

  /// Writes to a temporary sibling and renames, so readers never see a partial file.
  void save(const std::filesystem::path& path) const;
  static Container load(const std::filesystem::path& path);

 private:
  void put(std::string name, Payload payload);
  const Section& find(std::string_view name, SectionKind kind) const;

  std::vector<Section> sections_;
};

}  // namespace habi::nn
