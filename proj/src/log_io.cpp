#include "reptfd/log_io.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace reptfd::log_io {

namespace {

class Writer {
public:
    void bytes(const char* s, std::size_t n) { out_.insert(out_.end(), s, s + n); }
    void u8(uint32_t v) { out_.push_back(static_cast<uint8_t>(v)); }
    void u16(uint32_t v) {
        u8(v & 0xff);
        u8((v >> 8) & 0xff);
    }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) u8((v >> (8 * i)) & 0xff);
    }
    std::vector<uint8_t> take() { return std::move(out_); }

private:
    std::vector<uint8_t> out_;
};

class Reader {
public:
    explicit Reader(const std::vector<uint8_t>& b) : b_(b) {}
    void need(std::size_t n) const {
        if (pos_ + n > b_.size()) throw LogFormatError("truncated log", pos_);
    }
    void magic(const char* m) {
        need(4);
        if (std::memcmp(b_.data() + pos_, m, 4) != 0) throw LogFormatError("bad magic", pos_);
        pos_ += 4;
    }
    uint32_t u8() {
        need(1);
        return b_[pos_++];
    }
    uint32_t u16() {
        uint32_t lo = u8();
        return lo | (u8() << 8);
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::size_t pos() const { return pos_; }
    bool at_end() const { return pos_ == b_.size(); }

private:
    const std::vector<uint8_t>& b_;
    std::size_t pos_ = 0;
};

void check_version(Reader& r) {
    const std::size_t at = r.pos();
    if (r.u16() != kVersion) throw LogFormatError("unsupported version", at);
}

}  // namespace

std::vector<uint8_t> encode(const recorder::DeterminismLog& log) {
    Writer w;
    w.bytes("RTFD", 4);
    w.u16(kVersion);
    w.u32(log.sampling_span);
    w.u8(log.num_cores);
    w.u32(static_cast<uint32_t>(log.blocks.size()));
    w.u32(static_cast<uint32_t>(log.orders.size()));
    for (const auto& b : log.blocks) {
        w.u8(b.core);
        w.u32(b.block_idx);
        w.u16(b.mem_inst_count);
    }
    for (const auto& o : log.orders) {
        w.u8(o.src_core);
        w.u32(o.src_mem_idx);
        w.u8(o.dst_core);
        w.u32(o.dst_mem_idx);
    }
    return w.take();
}

std::vector<uint8_t> encode(const recorder::ResultLog& log) {
    Writer w;
    w.bytes("RTFC", 4);
    w.u16(kVersion);
    w.u8(log.num_cores);
    for (uint32_t c = 0; c < log.num_cores; ++c) w.u16(log.partial_len.at(c));
    w.u32(static_cast<uint32_t>(log.records.size()));
    for (const auto& r : log.records) {
        w.u8(r.core);
        w.u32(r.group_idx);
        w.u32(r.checksum);
    }
    return w.take();
}

recorder::DeterminismLog decode_determinism_log(const std::vector<uint8_t>& bytes) {
    Reader r(bytes);
    r.magic("RTFD");
    check_version(r);
    recorder::DeterminismLog log;
    log.sampling_span = r.u32();
    log.num_cores = r.u8();
    const uint32_t nblocks = r.u32();
    const uint32_t norders = r.u32();
    r.need(static_cast<std::size_t>(nblocks) * kBlockRecordBytes +
           static_cast<std::size_t>(norders) * kOrderRecordBytes);
    log.blocks.reserve(nblocks);
    for (uint32_t i = 0; i < nblocks; ++i) {
        recorder::BlockRecord b;
        const std::size_t at = r.pos();
        b.core = r.u8();
        b.block_idx = r.u32();
        b.mem_inst_count = static_cast<uint16_t>(r.u16());
        if (b.core >= log.num_cores) throw LogFormatError("block record core out of range", at);
        log.blocks.push_back(b);
    }
    log.orders.reserve(norders);
    for (uint32_t i = 0; i < norders; ++i) {
        recorder::OrderRecord o;
        const std::size_t at = r.pos();
        o.src_core = r.u8();
        o.src_mem_idx = r.u32();
        o.dst_core = r.u8();
        o.dst_mem_idx = r.u32();
        if (o.src_core >= log.num_cores || o.dst_core >= log.num_cores || o.src_core == o.dst_core)
            throw LogFormatError("bad order record cores", at);
        log.orders.push_back(o);
    }
    if (!r.at_end()) throw LogFormatError("trailing bytes", r.pos());
    return log;
}

recorder::ResultLog decode_result_log(const std::vector<uint8_t>& bytes) {
    Reader r(bytes);
    r.magic("RTFC");
    check_version(r);
    recorder::ResultLog log;
    log.num_cores = r.u8();
    for (uint32_t c = 0; c < log.num_cores; ++c) {
        const std::size_t at = r.pos();
        const uint32_t p = r.u16();
        if (p >= recorder::kChecksumGroup) throw LogFormatError("partial group length too large", at);
        log.partial_len.push_back(static_cast<uint16_t>(p));
    }
    const uint32_t n = r.u32();
    r.need(static_cast<std::size_t>(n) * kChecksumRecordBytes);
    log.records.reserve(n);
    for (uint32_t i = 0; i < n; ++i) {
        recorder::ChecksumRecord rec;
        const std::size_t at = r.pos();
        rec.core = r.u8();
        rec.group_idx = r.u32();
        rec.checksum = r.u32();
        if (rec.core >= log.num_cores) throw LogFormatError("checksum record core out of range", at);
        log.records.push_back(rec);
    }
    if (!r.at_end()) throw LogFormatError("trailing bytes", r.pos());
    return log;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace reptfd::log_io
