#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "silhpose/image.hpp"

// Minimal PNG codec. The writer emits 8-bit grayscale with uncompressed
// (stored) deflate blocks, which every PNG reader accepts. The reader
// implements the full inflate (stored, fixed and dynamic Huffman), all five
// scanline filters, and 8-bit gray/RGB/gray-alpha/RGBA color types.

namespace silhpose {

namespace {

uint32_t crc32_table_entry(uint32_t n) {
    uint32_t c = n;
    for (int k = 0; k < 8; ++k) {
        c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
    }
    return c;
}

uint32_t crc32(const uint8_t* data, size_t n, uint32_t crc = 0) {
    static std::array<uint32_t, 256> table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            t[i] = crc32_table_entry(i);
        }
        return t;
    }();
    uint32_t c = crc ^ 0xffffffffu;
    for (size_t i = 0; i < n; ++i) {
        c = table[(c ^ data[i]) & 0xff] ^ (c >> 8);
    }
    return c ^ 0xffffffffu;
}

uint32_t adler32(const uint8_t* data, size_t n) {
    uint32_t a = 1, b = 0;
    for (size_t i = 0; i < n; ++i) {
        a = (a + data[i]) % 65521u;
        b = (b + a) % 65521u;
    }
    return (b << 16) | a;
}

void put_u32_be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void write_chunk(std::ofstream& out, const char type[4], const std::vector<uint8_t>& data) {
    std::vector<uint8_t> head;
    put_u32_be(head, static_cast<uint32_t>(data.size()));
    out.write(reinterpret_cast<const char*>(head.data()), 4);
    out.write(type, 4);
    if (!data.empty()) {
        out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    }
    uint32_t crc = crc32(reinterpret_cast<const uint8_t*>(type), 4);
    crc = crc32(data.data(), data.size(), crc);
    std::vector<uint8_t> tail;
    put_u32_be(tail, crc);
    out.write(reinterpret_cast<const char*>(tail.data()), 4);
}

// ---------------------------------------------------------------- inflate

class BitReader {
public:
    BitReader(const uint8_t* data, size_t n) : data_(data), size_(n) {}

    uint32_t bits(int count) {
        uint32_t v = 0;
        for (int i = 0; i < count; ++i) {
            v |= static_cast<uint32_t>(bit()) << i;
        }
        return v;
    }

    int bit() {
        if (pos_ >= size_) {
            throw std::runtime_error("PNG: truncated deflate stream");
        }
        const int b = (data_[pos_] >> nbit_) & 1;
        if (++nbit_ == 8) {
            nbit_ = 0;
            ++pos_;
        }
        return b;
    }

    void align_byte() {
        if (nbit_ != 0) {
            nbit_ = 0;
            ++pos_;
        }
    }

    const uint8_t* raw(size_t n) {
        if (pos_ + n > size_) {
            throw std::runtime_error("PNG: truncated stored block");
        }
        const uint8_t* p = data_ + pos_;
        pos_ += n;
        return p;
    }

private:
    const uint8_t* data_;
    size_t size_;
    size_t pos_ = 0;
    int nbit_ = 0;
};

/// Canonical Huffman decoder built from code lengths.
struct Huffman {
    std::vector<int> counts;   // number of codes per bit length
    std::vector<int> symbols;  // symbols sorted by (length, symbol)

    explicit Huffman(const std::vector<int>& lengths) {
        int max_len = 0;
        for (int l : lengths) {
            max_len = std::max(max_len, l);
        }
        counts.assign(static_cast<size_t>(max_len) + 1, 0);
        for (int l : lengths) {
            if (l > 0) {
                ++counts[static_cast<size_t>(l)];
            }
        }
        std::vector<int> offsets(static_cast<size_t>(max_len) + 2, 0);
        for (int l = 1; l <= max_len; ++l) {
            offsets[static_cast<size_t>(l) + 1] = offsets[static_cast<size_t>(l)] + counts[static_cast<size_t>(l)];
        }
        symbols.assign(static_cast<size_t>(offsets[static_cast<size_t>(max_len) + 1]), 0);
        for (size_t s = 0; s < lengths.size(); ++s) {
            if (lengths[s] > 0) {
                symbols[static_cast<size_t>(offsets[static_cast<size_t>(lengths[s])]++)] = static_cast<int>(s);
            }
        }
    }

    int decode(BitReader& br) const {
        int code = 0, first = 0, index = 0;
        for (size_t len = 1; len < counts.size(); ++len) {
            code |= br.bit();
            const int count = counts[len];
            if (code - first < count) {
                return symbols[static_cast<size_t>(index + (code - first))];
            }
            index += count;
            first = (first + count) << 1;
            code <<= 1;
        }
        throw std::runtime_error("PNG: invalid Huffman code");
    }
};

const int kLengthBase[29] = {3,  4,  5,  6,  7,  8,  9,  10, 11,  13,  15,  17,  19,  23, 27,
                             31, 35, 43, 51, 59, 67, 83, 99, 115, 131, 163, 195, 227, 258};
const int kLengthExtra[29] = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2,
                              2, 3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 0};
const int kDistBase[30] = {1,    2,    3,    4,    5,    7,     9,     13,    17,   25,
                           33,   49,   65,   97,   129,  193,   257,   385,   513,  769,
                           1025, 1537, 2049, 3073, 4097, 6145,  8193,  12289, 16385, 24577};
const int kDistExtra[30] = {0, 0, 0, 0, 1, 1, 2, 2,  3,  3,  4,  4,  5,  5,  6,
                            6, 7, 7, 8, 8, 9, 9, 10, 10, 11, 11, 12, 12, 13, 13};

void inflate_block(BitReader& br, const Huffman& lit, const Huffman& dist, std::vector<uint8_t>& out) {
    for (;;) {
        const int sym = lit.decode(br);
        if (sym < 256) {
            out.push_back(static_cast<uint8_t>(sym));
        } else if (sym == 256) {
            return;
        } else {
            const int li = sym - 257;
            if (li >= 29) {
                throw std::runtime_error("PNG: invalid length symbol");
            }
            const int length = kLengthBase[li] + static_cast<int>(br.bits(kLengthExtra[li]));
            const int di = dist.decode(br);
            if (di >= 30) {
                throw std::runtime_error("PNG: invalid distance symbol");
            }
            const int distance = kDistBase[di] + static_cast<int>(br.bits(kDistExtra[di]));
            if (distance > static_cast<int>(out.size())) {
                throw std::runtime_error("PNG: distance past start of output");
            }
            for (int i = 0; i < length; ++i) {
                out.push_back(out[out.size() - static_cast<size_t>(distance)]);
            }
        }
    }
}

std::vector<uint8_t> inflate(const std::vector<uint8_t>& zdata) {
    if (zdata.size() < 2) {
        throw std::runtime_error("PNG: zlib stream too short");
    }
    BitReader br(zdata.data() + 2, zdata.size() - 2);  // skip zlib header
    std::vector<uint8_t> out;
    for (;;) {
        const int final = br.bit();
        const int type = static_cast<int>(br.bits(2));
        if (type == 0) {
            br.align_byte();
            const uint8_t* p = br.raw(4);
            const unsigned len = static_cast<unsigned>(p[0]) | (static_cast<unsigned>(p[1]) << 8);
            const unsigned nlen = static_cast<unsigned>(p[2]) | (static_cast<unsigned>(p[3]) << 8);
            if ((len ^ 0xffffu) != nlen) {
                throw std::runtime_error("PNG: corrupt stored block header");
            }
            const uint8_t* data = br.raw(len);
            out.insert(out.end(), data, data + len);
        } else if (type == 1) {
            std::vector<int> lit_len(288);
            for (int i = 0; i < 288; ++i) {
                lit_len[static_cast<size_t>(i)] = i < 144 ? 8 : i < 256 ? 9 : i < 280 ? 7 : 8;
            }
            const Huffman lit(lit_len);
            const Huffman dist(std::vector<int>(30, 5));
            inflate_block(br, lit, dist, out);
        } else if (type == 2) {
            const int hlit = static_cast<int>(br.bits(5)) + 257;
            const int hdist = static_cast<int>(br.bits(5)) + 1;
            const int hclen = static_cast<int>(br.bits(4)) + 4;
            static const int order[19] = {16, 17, 18, 0, 8,  7, 9,  6, 10, 5,
                                          11, 4,  12, 3, 13, 2, 14, 1, 15};
            std::vector<int> clen(19, 0);
            for (int i = 0; i < hclen; ++i) {
                clen[static_cast<size_t>(order[i])] = static_cast<int>(br.bits(3));
            }
            const Huffman cl(clen);
            std::vector<int> lengths;
            while (static_cast<int>(lengths.size()) < hlit + hdist) {
                const int sym = cl.decode(br);
                if (sym < 16) {
                    lengths.push_back(sym);
                } else if (sym == 16) {
                    if (lengths.empty()) {
                        throw std::runtime_error("PNG: repeat with no previous length");
                    }
                    const int n = 3 + static_cast<int>(br.bits(2));
                    lengths.insert(lengths.end(), static_cast<size_t>(n), lengths.back());
                } else if (sym == 17) {
                    const int n = 3 + static_cast<int>(br.bits(3));
                    lengths.insert(lengths.end(), static_cast<size_t>(n), 0);
                } else {
                    const int n = 11 + static_cast<int>(br.bits(7));
                    lengths.insert(lengths.end(), static_cast<size_t>(n), 0);
                }
            }
            const Huffman lit(std::vector<int>(lengths.begin(), lengths.begin() + hlit));
            const Huffman dist(std::vector<int>(lengths.begin() + hlit, lengths.end()));
            inflate_block(br, lit, dist, out);
        } else {
            throw std::runtime_error("PNG: invalid deflate block type");
        }
        if (final) {
            break;
        }
    }
    return out;
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a);
    const int pb = std::abs(p - b);
    const int pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) {
        return a;
    }
    return pb <= pc ? b : c;
}

}  // namespace

void write_png(const SilhouetteImage& img, const std::string& path) {
    if (img.width < 1 || img.height < 1) {
        throw std::invalid_argument("write_png: empty image");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write PNG file: " + path);
    }
    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<uint8_t> ihdr;
    put_u32_be(ihdr, static_cast<uint32_t>(img.width));
    put_u32_be(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // grayscale
    ihdr.push_back(0);  // deflate
    ihdr.push_back(0);  // adaptive filtering
    ihdr.push_back(0);  // no interlace
    write_chunk(out, "IHDR", ihdr);

    // Raw scanlines with filter byte 0.
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(img.height) * (static_cast<size_t>(img.width) + 1));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);
        for (int x = 0; x < img.width; ++x) {
            const double v = std::clamp(static_cast<double>(img.at(x, y)), 0.0, 1.0);
            raw.push_back(static_cast<uint8_t>(std::lround(v * 255.0)));
        }
    }

    // zlib stream with stored deflate blocks.
    std::vector<uint8_t> z;
    z.push_back(0x78);
    z.push_back(0x01);
    size_t off = 0;
    while (off < raw.size()) {
        const size_t n = std::min<size_t>(65535, raw.size() - off);
        const bool last = off + n == raw.size();
        z.push_back(last ? 1 : 0);
        z.push_back(static_cast<uint8_t>(n & 0xff));
        z.push_back(static_cast<uint8_t>(n >> 8));
        z.push_back(static_cast<uint8_t>(~n & 0xff));
        z.push_back(static_cast<uint8_t>((~n >> 8) & 0xff));
        z.insert(z.end(), raw.begin() + static_cast<std::ptrdiff_t>(off),
                 raw.begin() + static_cast<std::ptrdiff_t>(off + n));
        off += n;
    }
    put_u32_be(z, adler32(raw.data(), raw.size()));
    write_chunk(out, "IDAT", z);
    write_chunk(out, "IEND", {});
}

SilhouetteImage read_png(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open PNG file: " + path);
    }
    std::vector<uint8_t> file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (file.size() < 8 || std::memcmp(file.data(), sig, 8) != 0) {
        throw std::runtime_error(path + ": not a PNG file");
    }

    int width = 0, height = 0, bit_depth = 0, color_type = 0;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    while (pos + 8 <= file.size()) {
        const uint32_t len = (static_cast<uint32_t>(file[pos]) << 24) |
                             (static_cast<uint32_t>(file[pos + 1]) << 16) |
                             (static_cast<uint32_t>(file[pos + 2]) << 8) | file[pos + 3];
        const std::string type(reinterpret_cast<const char*>(&file[pos + 4]), 4);
        if (pos + 12 + len > file.size()) {
            throw std::runtime_error(path + ": truncated PNG chunk");
        }
        const uint8_t* data = &file[pos + 8];
        if (type == "IHDR") {
            width = static_cast<int>((static_cast<uint32_t>(data[0]) << 24) |
                                     (static_cast<uint32_t>(data[1]) << 16) |
                                     (static_cast<uint32_t>(data[2]) << 8) | data[3]);
            height = static_cast<int>((static_cast<uint32_t>(data[4]) << 24) |
                                      (static_cast<uint32_t>(data[5]) << 16) |
                                      (static_cast<uint32_t>(data[6]) << 8) | data[7]);
            bit_depth = data[8];
            color_type = data[9];
            if (data[12] != 0) {
                throw std::runtime_error(path + ": interlaced PNG not supported");
            }
        } else if (type == "IDAT") {
            idat.insert(idat.end(), data, data + len);
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    if (width < 1 || height < 1) {
        throw std::runtime_error(path + ": missing IHDR");
    }
    if (bit_depth != 8) {
        throw std::runtime_error(path + ": only 8-bit PNGs are supported");
    }
    int channels = 0;
    switch (color_type) {
        case 0: channels = 1; break;
        case 2: channels = 3; break;
        case 4: channels = 2; break;
        case 6: channels = 4; break;
        default:
            throw std::runtime_error(path + ": unsupported PNG color type " +
                                     std::to_string(color_type));
    }

    const std::vector<uint8_t> raw = inflate(idat);
    const size_t stride = static_cast<size_t>(width) * static_cast<size_t>(channels);
    if (raw.size() < static_cast<size_t>(height) * (stride + 1)) {
        throw std::runtime_error(path + ": PNG pixel data too short");
    }

    std::vector<uint8_t> recon(static_cast<size_t>(height) * stride);
    for (int y = 0; y < height; ++y) {
        const uint8_t filter = raw[static_cast<size_t>(y) * (stride + 1)];
        const uint8_t* src = &raw[static_cast<size_t>(y) * (stride + 1) + 1];
        uint8_t* dst = &recon[static_cast<size_t>(y) * stride];
        const uint8_t* prev = y > 0 ? &recon[static_cast<size_t>(y - 1) * stride] : nullptr;
        for (size_t i = 0; i < stride; ++i) {
            const int a = i >= static_cast<size_t>(channels) ? dst[i - static_cast<size_t>(channels)] : 0;
            const int b = prev ? prev[i] : 0;
            const int c =
                (prev && i >= static_cast<size_t>(channels)) ? prev[i - static_cast<size_t>(channels)] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw std::runtime_error(path + ": invalid PNG filter type");
            }
            dst[i] = static_cast<uint8_t>(v & 0xff);
        }
    }

    SilhouetteImage img(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const uint8_t* px = &recon[static_cast<size_t>(y) * stride +
                                       static_cast<size_t>(x) * static_cast<size_t>(channels)];
            double v = 0.0;
            if (channels <= 2) {
                v = px[0] / 255.0;
            } else {
                v = (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) / 255.0;
            }
            img.set(x, y, static_cast<float>(v));
        }
    }
    return img;
}

}  // namespace silhpose
