#pragma once

// Volume ingestion: a minimal NIfTI-1 reader/writer (uncompressed single
// file), a native raw+header fixture format, and intensity preprocessing.

#include <cstring>
#include <fstream>
#include <sstream>

#include "spikewarp/conversion.hpp"  // percentile
#include "spikewarp/tensor.hpp"

namespace spikewarp {

struct VolumeFile {
  std::int64_t dims[3] = {0, 0, 0};       // D, H, W
  double spacing[3] = {1.0, 1.0, 1.0};
  std::string source;                     // "nifti1" or "native"
  Tensor<double> data;                    // canonical [1,D,H,W]
};

namespace nifti_detail {

template <class T>
T swap_bytes(T v) {
  char* p = reinterpret_cast<char*>(&v);
  std::reverse(p, p + sizeof(T));
  return v;
}

template <class T>
T read_at(const std::vector<char>& buf, std::size_t offset, bool swap) {
  T v;
  std::memcpy(&v, buf.data() + offset, sizeof(T));
  return swap ? swap_bytes(v) : v;
}

}  // namespace nifti_detail

// NIfTI-1 datatype codes supported here.
enum : std::int16_t {
  kNiftiU8 = 2,
  kNiftiI16 = 4,
  kNiftiF32 = 16,
  kNiftiF64 = 64,
};

inline VolumeFile read_nifti1(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("nifti: cannot open " + path);
  std::vector<char> hdr(348);
  is.read(hdr.data(), 348);
  if (!is) throw std::runtime_error("nifti: file shorter than the 348-byte header");

  // endianness heuristic: dim[0] (offset 40) must land in [1,7]
  std::int16_t dim0 = nifti_detail::read_at<std::int16_t>(hdr, 40, false);
  bool swap = false;
  if (dim0 < 1 || dim0 > 7) {
    swap = true;
    dim0 = nifti_detail::read_at<std::int16_t>(hdr, 40, true);
    if (dim0 < 1 || dim0 > 7)
      throw std::runtime_error("nifti: dim[0] invalid under both byte orders (offset 40)");
  }
  const auto sizeof_hdr = nifti_detail::read_at<std::int32_t>(hdr, 0, swap);
  if (sizeof_hdr != 348)
    throw std::runtime_error("nifti: header size field is " + std::to_string(sizeof_hdr) +
                             ", expected 348 (offset 0)");
  char magic[4];
  std::memcpy(magic, hdr.data() + 344, 4);
  if (!((std::memcmp(magic, "n+1", 4) == 0) || (std::memcmp(magic, "ni1", 4) == 0)))
    throw std::runtime_error("nifti: bad magic field at offset 344");

  if (dim0 < 3) throw std::runtime_error("nifti: need a 3-dimensional volume");
  VolumeFile vf;
  vf.source = "nifti1";
  // dim[1..3] are x,y,z fastest-to-slowest; our layout is [1,D,H,W] with W
  // the fastest axis, so D=dim[3], H=dim[2], W=dim[1]
  const std::int64_t nx = nifti_detail::read_at<std::int16_t>(hdr, 42, swap);
  const std::int64_t ny = nifti_detail::read_at<std::int16_t>(hdr, 44, swap);
  const std::int64_t nz = nifti_detail::read_at<std::int16_t>(hdr, 46, swap);
  vf.dims[0] = nz;
  vf.dims[1] = ny;
  vf.dims[2] = nx;
  vf.spacing[2] = nifti_detail::read_at<float>(hdr, 80, swap);
  vf.spacing[1] = nifti_detail::read_at<float>(hdr, 84, swap);
  vf.spacing[0] = nifti_detail::read_at<float>(hdr, 88, swap);
  const auto datatype = nifti_detail::read_at<std::int16_t>(hdr, 70, swap);
  float vox_offset = nifti_detail::read_at<float>(hdr, 108, swap);
  if (vox_offset == 0) vox_offset = 352;
  float slope = nifti_detail::read_at<float>(hdr, 112, swap);
  const float inter = nifti_detail::read_at<float>(hdr, 116, swap);
  if (slope == 0) slope = 1;

  std::size_t elem;
  switch (datatype) {
    case kNiftiU8: elem = 1; break;
    case kNiftiI16: elem = 2; break;
    case kNiftiF32: elem = 4; break;
    case kNiftiF64: elem = 8; break;
    default:
      throw std::runtime_error("nifti: unsupported datatype code " + std::to_string(datatype) +
                               " (offset 70)");
  }
  const std::int64_t n = nx * ny * nz;
  std::vector<char> payload(static_cast<std::size_t>(n) * elem);
  is.seekg(static_cast<std::streamoff>(vox_offset));
  is.read(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!is)
    throw std::runtime_error("nifti: truncated payload, expected " +
                             std::to_string(payload.size()) + " bytes at offset " +
                             std::to_string(static_cast<std::int64_t>(vox_offset)));

  vf.data = Tensor<double>(Shape{1, nz, ny, nx});
  for (std::int64_t i = 0; i < n; ++i) {
    double v;
    const std::size_t off = static_cast<std::size_t>(i) * elem;
    switch (datatype) {
      case kNiftiU8: v = static_cast<unsigned char>(payload[off]); break;
      case kNiftiI16: {
        std::int16_t x;
        std::memcpy(&x, payload.data() + off, 2);
        if (swap) x = nifti_detail::swap_bytes(x);
        v = x;
        break;
      }
      case kNiftiF32: {
        float x;
        std::memcpy(&x, payload.data() + off, 4);
        if (swap) x = nifti_detail::swap_bytes(x);
        v = x;
        break;
      }
      default: {
        double x;
        std::memcpy(&x, payload.data() + off, 8);
        if (swap) x = nifti_detail::swap_bytes(x);
        v = x;
        break;
      }
    }
    vf.data[i] = static_cast<double>(slope) * v + static_cast<double>(inter);
  }
  return vf;
}

// Writes a float32 little-endian NIfTI-1 file.
inline void write_nifti1(const std::string& path, const Tensor<double>& vol,
                         const double spacing[3] = nullptr) {
  Dims4 d = Dims4::of(vol.shape);
  if (d.c != 1) throw std::invalid_argument("nifti writer expects [1,D,H,W]");
  std::vector<char> hdr(352, 0);
  auto put = [&](std::size_t off, auto v) { std::memcpy(hdr.data() + off, &v, sizeof(v)); };
  put(0, std::int32_t{348});
  put(40, std::int16_t{3});
  put(42, static_cast<std::int16_t>(d.w));
  put(44, static_cast<std::int16_t>(d.h));
  put(46, static_cast<std::int16_t>(d.d));
  put(70, std::int16_t{kNiftiF32});
  put(72, std::int16_t{32});  // bits per voxel
  put(76, 1.0f);
  put(80, static_cast<float>(spacing ? spacing[2] : 1.0));
  put(84, static_cast<float>(spacing ? spacing[1] : 1.0));
  put(88, static_cast<float>(spacing ? spacing[0] : 1.0));
  put(108, 352.0f);  // vox_offset
  put(112, 1.0f);    // scl_slope
  std::memcpy(hdr.data() + 344, "n+1", 4);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("nifti: cannot open " + path + " for writing");
  os.write(hdr.data(), 352);
  for (double v : vol.data) {
    const float f = static_cast<float>(v);
    os.write(reinterpret_cast<const char*>(&f), 4);
  }
  if (!os) throw std::runtime_error("nifti: write failed for " + path);
}

// Native fixture format: flat little-endian binary payload (.raw) plus a
// text sidecar (.hdr) holding dims, dtype, spacing, and byte order.
inline void write_native(const std::string& base, const Tensor<double>& vol,
                         const double spacing[3] = nullptr) {
  Dims4 d = Dims4::of(vol.shape);
  if (d.c != 1) throw std::invalid_argument("native writer expects [1,D,H,W]");
  std::ofstream hs(base + ".hdr");
  hs << "dims " << d.d << " " << d.h << " " << d.w << "\n";
  hs << "dtype f64\n";
  hs << "spacing " << (spacing ? spacing[0] : 1.0) << " " << (spacing ? spacing[1] : 1.0) << " "
     << (spacing ? spacing[2] : 1.0) << "\n";
  hs << "endian little\n";
  if (!hs) throw std::runtime_error("native: cannot write " + base + ".hdr");
  std::ofstream os(base + ".raw", std::ios::binary);
  os.write(reinterpret_cast<const char*>(vol.data.data()),
           static_cast<std::streamsize>(vol.data.size() * 8));
  if (!os) throw std::runtime_error("native: cannot write " + base + ".raw");
}

inline VolumeFile read_native(const std::string& base) {
  std::ifstream hs(base + ".hdr");
  if (!hs) throw std::runtime_error("native: cannot open " + base + ".hdr");
  VolumeFile vf;
  vf.source = "native";
  std::string dtype = "f64", endian = "little", line;
  while (std::getline(hs, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "dims")
      ls >> vf.dims[0] >> vf.dims[1] >> vf.dims[2];
    else if (key == "dtype")
      ls >> dtype;
    else if (key == "spacing")
      ls >> vf.spacing[0] >> vf.spacing[1] >> vf.spacing[2];
    else if (key == "endian")
      ls >> endian;
    else if (!key.empty())
      throw std::runtime_error("native: unknown header key '" + key + "'");
  }
  if (dtype != "f64" || endian != "little")
    throw std::runtime_error("native: only little-endian f64 payloads are supported");
  const std::int64_t n = vf.dims[0] * vf.dims[1] * vf.dims[2];
  vf.data = Tensor<double>(Shape{1, vf.dims[0], vf.dims[1], vf.dims[2]});
  std::ifstream is(base + ".raw", std::ios::binary);
  is.read(reinterpret_cast<char*>(vf.data.data.data()), n * 8);
  if (!is) throw std::runtime_error("native: truncated payload in " + base + ".raw");
  return vf;
}

// Percentile intensity clip and rescale to [0,1]. A constant volume comes
// back all zero with the warning flag set.
template <class T>
Tensor<T> preprocess(const Tensor<T>& vol, double lo_pct = 0.5, double hi_pct = 99.5,
                     bool* constant_warning = nullptr) {
  if (vol.numel() == 0) throw std::invalid_argument("preprocess: empty volume");
  std::vector<double> vals(vol.data.begin(), vol.data.end());
  const double lo = percentile(vals, lo_pct);
  const double hi = percentile(vals, hi_pct);
  Tensor<T> out(vol.shape);
  if (constant_warning) *constant_warning = false;
  if (hi <= lo) {
    if (constant_warning) *constant_warning = true;
    return out;
  }
  for (std::int64_t i = 0; i < vol.numel(); ++i) {
    double v = std::min(std::max(static_cast<double>(vol[i]), lo), hi);
    out[i] = static_cast<T>((v - lo) / (hi - lo));
  }
  return out;
}

}  // namespace spikewarp
