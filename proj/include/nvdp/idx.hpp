// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

#include "nvdp/tasks.hpp"

namespace nvdp {

// Big-endian IDX container of unsigned bytes (MNIST layout).
inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

class IdxError : public std::runtime_error {
 public:
  IdxError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at byte offset " + std::to_string(offset)),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

struct IdxArray {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;
};

IdxArray parse_idx(const std::vector<std::uint8_t>& bytes);
IdxArray read_idx(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_idx(const IdxArray& arr);
void write_idx(const std::filesystem::path& path, const IdxArray& arr);

// xs = (row / (H-1), col / (W-1)), ys = intensity / 255.
Task image_to_task(const std::uint8_t* pixels, std::size_t height, std::size_t width);

// Loads up to `limit` images (0 = all). Labels, when given, are stored in
// Task::meta["label"].
std::vector<Task> load_idx_images(const std::filesystem::path& images,
                                  const std::optional<std::filesystem::path>& labels,
                                  std::size_t limit = 0);

}  // namespace nvdp
