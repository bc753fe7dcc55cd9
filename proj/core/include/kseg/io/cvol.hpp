#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "kseg/kspace.hpp"

namespace kseg {

/// CVOL: a little-endian binary container for one volume.
/// Layout: magic "CVOL1\0" | dtype u8 (1 = complex64, 2 = uint8) |
/// dims u32 x3 (d, h, w) | metadata count u32 | entries (key u16+bytes,
/// value u32+bytes) | row-major payload.
enum class CvolDtype : uint8_t { complex64 = 1, u8 = 2 };

using CvolMetadata = std::map<std::string, std::string>;

void write_cvol(const std::filesystem::path& path, const ComplexVolume& volume,
                const CvolMetadata& metadata = {});
void write_cvol(const std::filesystem::path& path, const MaskVolume& volume,
                const CvolMetadata& metadata = {});

struct CvolFile {
    CvolDtype dtype;
    ComplexVolume complex_volume; // valid when dtype == complex64
    MaskVolume mask_volume;       // valid when dtype == u8
    CvolMetadata metadata;
};

CvolFile read_cvol(const std::filesystem::path& path);

ComplexVolume read_cvol_complex(const std::filesystem::path& path, CvolMetadata* metadata = nullptr);
MaskVolume read_cvol_mask(const std::filesystem::path& path, CvolMetadata* metadata = nullptr);

} // namespace kseg
