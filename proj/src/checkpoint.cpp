// Copyright 2026 The TaDiCodec-desk Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tadicodec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "tadicodec/common.hpp"

namespace tdc::ckpt {

namespace {

constexpr char kMagic[8] = {'T', 'D', 'C', 'K', 'P', 'T', '\0', '\1'};
constexpr uint32_t kDtypeF64 = 2;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

uint64_t fnv1a(const unsigned char* p, size_t n) {
    uint64_t h = 1469598103934665603ULL;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

class Writer {
public:
    void bytes(const void* p, size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        buf.insert(buf.end(), b, b + n);
    }
    void u32(uint32_t v) { bytes(&v, 4); }
    void u64(uint64_t v) { bytes(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::vector<unsigned char> buf;
};

class Reader {
public:
    Reader(const std::vector<unsigned char>& b, std::string path) : buf_(b), path_(std::move(path)) {}
    void bytes(void* out, size_t n, const std::string& what) {
        if (pos_ + n > buf_.size()) throw CheckpointError(path_ + ": truncated while reading " + what);
        std::memcpy(out, buf_.data() + pos_, n);
        pos_ += n;
    }
    uint32_t u32(const std::string& what) {
        uint32_t v;
        bytes(&v, 4, what);
        return v;
    }
    uint64_t u64(const std::string& what) {
        uint64_t v;
        bytes(&v, 8, what);
        return v;
    }
    std::string str(const std::string& what) {
        const uint32_t n = u32(what);
        if (pos_ + n > buf_.size()) throw CheckpointError(path_ + ": truncated while reading " + what);
        std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    size_t pos() const { return pos_; }

private:
    const std::vector<unsigned char>& buf_;
    std::string path_;
    size_t pos_ = 0;
};

}  // namespace

const ag::Matrix* CheckpointData::find(const std::string& name) const {
    for (const auto& [n, m] : arrays)
        if (n == name) return &m;
    return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data) {
    Writer w;
    w.bytes(kMagic, 8);
    w.u32(data.version);
    w.str(data.config_json);
    w.u64(data.step);
    w.str(data.rng_state);
    w.u32(static_cast<uint32_t>(data.arrays.size()));
    uint64_t offset = 0;
    for (const auto& [name, m] : data.arrays) {
        w.str(name);
        w.u32(kDtypeF64);
        w.u32(static_cast<uint32_t>(m.rows));
        w.u32(static_cast<uint32_t>(m.cols));
        w.u64(offset);
        w.u64(fnv1a(reinterpret_cast<const unsigned char*>(m.data.data()), m.size() * sizeof(double)));
        offset += m.size() * sizeof(double);
    }
    for (const auto& [name, m] : data.arrays) w.bytes(m.data.data(), m.size() * sizeof(double));

    // Write to a sibling file and rename so readers never see a partial file.
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw CheckpointError("cannot open " + tmp + " for writing");
        os.write(reinterpret_cast<const char*>(w.buf.data()), static_cast<std::streamsize>(w.buf.size()));
        if (!os) throw CheckpointError("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("checkpoint not found: " + path.string());
    const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    Reader r(buf, path.string());
    char magic[8];
    r.bytes(magic, 8, "magic");
    if (std::memcmp(magic, kMagic, 8) != 0) throw CheckpointError(path.string() + ": not a checkpoint (bad magic)");
    CheckpointData d;
    d.version = r.u32("version");
    if (d.version != kFormatVersion)
        throw CheckpointError(path.string() + ": format version " + std::to_string(d.version) + ", expected " +
                              std::to_string(kFormatVersion));
    d.config_json = r.str("config");
    d.step = r.u64("step");
    d.rng_state = r.str("rng state");
    const uint32_t n = r.u32("array count");
    struct Entry {
        std::string name;
        uint32_t rows, cols;
        uint64_t offset, checksum;
    };
    std::vector<Entry> table;
    for (uint32_t i = 0; i < n; ++i) {
        Entry e;
        e.name = r.str("array table");
        const uint32_t dtype = r.u32("array table (" + e.name + ")");
        if (dtype != kDtypeF64) throw CheckpointError(path.string() + ": array '" + e.name + "' has unsupported dtype");
        e.rows = r.u32(e.name);
        e.cols = r.u32(e.name);
        e.offset = r.u64(e.name);
        e.checksum = r.u64(e.name);
        table.push_back(std::move(e));
    }
    const size_t data_start = r.pos();
    for (const auto& e : table) {
        const size_t bytes = static_cast<size_t>(e.rows) * e.cols * sizeof(double);
        if (data_start + e.offset + bytes > buf.size())
            throw CheckpointError(path.string() + ": array '" + e.name + "' is truncated");
        const unsigned char* p = buf.data() + data_start + e.offset;
        if (fnv1a(p, bytes) != e.checksum)
            throw CheckpointError(path.string() + ": array '" + e.name + "' is corrupted (checksum mismatch)");
        ag::Matrix m(static_cast<int>(e.rows), static_cast<int>(e.cols));
        std::memcpy(m.data.data(), p, bytes);
        d.arrays.emplace_back(e.name, std::move(m));
    }
    return d;
}

}  // namespace tdc::ckpt
