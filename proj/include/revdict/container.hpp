#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "revdict/math.hpp"

namespace revdict {

// Versioned binary artifact: magic, format version, a JSON header and a list
// of raw little-endian float64 tensors, closed by a checksum. Used for head,
// aligner and index files.
struct Container {
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json header;
  std::vector<std::vector<double>> tensors;
};

std::string encode_container(const Container& c);
// Throws DataError on bad magic, unsupported version, truncation or a
// checksum mismatch.
Container decode_container(std::string_view bytes);

void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path);

// Layer shapes and activations as JSON; weights and biases appended to
// `tensors` in layer order.
nlohmann::json describe_stack(const FeedForwardStack& stack, std::vector<std::vector<double>>& tensors);
// Inverse of describe_stack, reading tensors from `next` onwards and advancing it.
FeedForwardStack restore_stack(const nlohmann::json& layers,
                               const std::vector<std::vector<double>>& tensors, std::size_t& next);

}  // namespace revdict
