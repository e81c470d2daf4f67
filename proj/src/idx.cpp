// SPDX-License-Identifier: Apache-2.0
#include "nvdp/idx.hpp"

#include <fstream>
#include <iterator>

namespace nvdp {

namespace {

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  if (off + 4 > b.size()) throw IdxError("truncated IDX header", off);
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

void push_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

IdxArray parse_idx(const std::vector<std::uint8_t>& bytes) {
  IdxArray arr;
  arr.magic = read_be32(bytes, 0);
  // High half must be zero; byte 2 is the element type (0x08 = unsigned byte).
  if ((arr.magic & 0xFFFF0000u) != 0 || ((arr.magic >> 8) & 0xFF) != 0x08) {
    throw IdxError("bad IDX magic", 0);
  }
  const std::uint32_t ndims = arr.magic & 0xFF;
  if (ndims == 0) throw IdxError("IDX file declares zero dimensions", 3);
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < ndims; ++i) {
    const std::uint32_t d = read_be32(bytes, 4 + 4 * i);
    arr.dims.push_back(d);
    count *= d;
  }
  const std::size_t start = 4 + 4 * static_cast<std::size_t>(ndims);
  if (bytes.size() < start + count) {
    throw IdxError("truncated IDX payload: expected " + std::to_string(count) +
                       " bytes, found " + std::to_string(bytes.size() - start),
                   bytes.size());
  }
  arr.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                  bytes.begin() + static_cast<std::ptrdiff_t>(start + count));
  return arr;
}

IdxArray read_idx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open IDX file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_idx(bytes);
}

std::vector<std::uint8_t> encode_idx(const IdxArray& arr) {
  std::vector<std::uint8_t> out;
  push_be32(out, arr.magic);
  for (std::uint32_t d : arr.dims) push_be32(out, d);
  out.insert(out.end(), arr.data.begin(), arr.data.end());
  return out;
}

void write_idx(const std::filesystem::path& path, const IdxArray& arr) {
  const auto bytes = encode_idx(arr);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write IDX file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

Task image_to_task(const std::uint8_t* pixels, std::size_t height, std::size_t width) {
  Task t;
  const auto n = static_cast<Index>(height * width);
  t.xs.resize(n, 2);
  t.ys.resize(n, 1);
  const double hs = height > 1 ? static_cast<double>(height - 1) : 1.0;
  const double ws = width > 1 ? static_cast<double>(width - 1) : 1.0;
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const auto i = static_cast<Index>(r * width + c);
      t.xs(i, 0) = static_cast<double>(r) / hs;
      t.xs(i, 1) = static_cast<double>(c) / ws;
      t.ys(i, 0) = static_cast<double>(pixels[r * width + c]) / 255.0;
    }
  }
  t.meta["family"] = "image";
  return t;
}

std::vector<Task> load_idx_images(const std::filesystem::path& images,
                                  const std::optional<std::filesystem::path>& labels,
                                  std::size_t limit) {
  IdxArray img = read_idx(images);
  if (img.magic != kIdxImagesMagic || img.dims.size() != 3) {
    throw IdxError("expected an image IDX file (magic 0x00000803)", 0);
  }
  std::optional<IdxArray> lab;
  if (labels) {
    lab = read_idx(*labels);
    if (lab->magic != kIdxLabelsMagic || lab->dims.size() != 1) {
      throw IdxError("expected a label IDX file (magic 0x00000801)", 0);
    }
    if (lab->dims[0] != img.dims[0]) {
      throw IdxError("label count " + std::to_string(lab->dims[0]) +
                         " does not match image count " + std::to_string(img.dims[0]),
                     4);
    }
  }
  const std::size_t h = img.dims[1];
  const std::size_t w = img.dims[2];
  std::size_t n = img.dims[0];
  if (limit > 0 && limit < n) n = limit;
  std::vector<Task> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Task t = image_to_task(img.data.data() + i * h * w, h, w);
    t.meta["index"] = std::to_string(i);
    if (lab) t.meta["label"] = std::to_string(lab->data[i]);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace nvdp
