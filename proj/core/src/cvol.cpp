#include "kseg/io/cvol.hpp"

#include <cstring>
#include <fstream>

#include "kseg/errors.hpp"

namespace kseg {

namespace {

constexpr char kMagic[6] = {'C', 'V', 'O', 'L', '1', '\0'};

void put_u16(std::ostream& os, uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); }
void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

uint16_t get_u16(std::istream& is) {
    uint16_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 2);
    return v;
}
uint32_t get_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

void write_header(std::ostream& os, CvolDtype dtype, int d, int h, int w,
                  const CvolMetadata& metadata) {
    os.write(kMagic, sizeof(kMagic));
    uint8_t code = uint8_t(dtype);
    os.write(reinterpret_cast<const char*>(&code), 1);
    put_u32(os, uint32_t(d));
    put_u32(os, uint32_t(h));
    put_u32(os, uint32_t(w));
    put_u32(os, uint32_t(metadata.size()));
    for (const auto& [key, value] : metadata) {
        if (key.size() > 0xFFFF) throw io_error("cvol: metadata key too long");
        put_u16(os, uint16_t(key.size()));
        os.write(key.data(), std::streamsize(key.size()));
        put_u32(os, uint32_t(value.size()));
        os.write(value.data(), std::streamsize(value.size()));
    }
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw io_error("cvol: cannot open for writing: " + path.string());
    return os;
}

} // namespace

void write_cvol(const std::filesystem::path& path, const ComplexVolume& volume,
                const CvolMetadata& metadata) {
    CvolMetadata meta = metadata;
    meta.emplace("domain", volume.domain == Domain::kspace ? "kspace" : "image");
    auto os = open_out(path);
    write_header(os, CvolDtype::complex64, volume.depth, volume.height, volume.width, meta);
    os.write(reinterpret_cast<const char*>(volume.data.data()),
             std::streamsize(volume.data.size() * sizeof(std::complex<float>)));
    if (!os) throw io_error("cvol: write failed: " + path.string());
}

void write_cvol(const std::filesystem::path& path, const MaskVolume& volume,
                const CvolMetadata& metadata) {
    auto os = open_out(path);
    write_header(os, CvolDtype::u8, volume.depth, volume.height, volume.width, metadata);
    os.write(reinterpret_cast<const char*>(volume.data.data()),
             std::streamsize(volume.data.size()));
    if (!os) throw io_error("cvol: write failed: " + path.string());
}

CvolFile read_cvol(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cvol: cannot open: " + path.string());

    char magic[6];
    is.read(magic, 6);
    if (!is || std::memcmp(magic, kMagic, 6) != 0)
        throw io_error("cvol: bad magic in " + path.string());

    uint8_t code = 0;
    is.read(reinterpret_cast<char*>(&code), 1);
    uint32_t d = get_u32(is), h = get_u32(is), w = get_u32(is);
    uint32_t meta_count = get_u32(is);

    CvolFile out;
    for (uint32_t i = 0; i < meta_count; ++i) {
        uint16_t klen = get_u16(is);
        std::string key(klen, '\0');
        is.read(key.data(), klen);
        uint32_t vlen = get_u32(is);
        std::string value(vlen, '\0');
        is.read(value.data(), vlen);
        out.metadata.emplace(std::move(key), std::move(value));
    }
    if (!is) throw io_error("cvol: truncated header in " + path.string());

    size_t count = size_t(d) * h * w;
    if (code == uint8_t(CvolDtype::complex64)) {
        out.dtype = CvolDtype::complex64;
        Domain dom = Domain::image;
        auto it = out.metadata.find("domain");
        if (it != out.metadata.end() && it->second == "kspace") dom = Domain::kspace;
        out.complex_volume = ComplexVolume(int(d), int(h), int(w), dom);
        is.read(reinterpret_cast<char*>(out.complex_volume.data.data()),
                std::streamsize(count * sizeof(std::complex<float>)));
    } else if (code == uint8_t(CvolDtype::u8)) {
        out.dtype = CvolDtype::u8;
        out.mask_volume = MaskVolume(int(d), int(h), int(w));
        is.read(reinterpret_cast<char*>(out.mask_volume.data.data()), std::streamsize(count));
    } else {
        throw io_error("cvol: unknown dtype code " + std::to_string(code) + " in " + path.string());
    }
    if (!is) throw io_error("cvol: truncated payload in " + path.string());
    return out;
}

ComplexVolume read_cvol_complex(const std::filesystem::path& path, CvolMetadata* metadata) {
    auto file = read_cvol(path);
    if (file.dtype != CvolDtype::complex64)
        throw io_error("cvol: expected complex64 data in " + path.string());
    if (metadata) *metadata = std::move(file.metadata);
    return std::move(file.complex_volume);
}

MaskVolume read_cvol_mask(const std::filesystem::path& path, CvolMetadata* metadata) {
    auto file = read_cvol(path);
    if (file.dtype != CvolDtype::u8)
        throw io_error("cvol: expected uint8 data in " + path.string());
    if (metadata) *metadata = std::move(file.metadata);
    return std::move(file.mask_volume);
}

} // namespace kseg
