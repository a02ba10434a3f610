#include "slca/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "slca/digest.hpp"
#include "slca/errors.hpp"

namespace slca {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
    const unsigned char* p;
    const unsigned char* end;

    void need(std::size_t n) const {
        if (static_cast<std::size_t>(end - p) < n) throw FormatError("checkpoint: truncated file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
        p += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
        p += 8;
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return *p++;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        return s;
    }
};

}  // namespace

void save_checkpoint(const std::vector<Param<float>*>& params, const std::string& path) {
    std::string manifest;
    std::string payload;
    manifest.append(kCheckpointMagic, sizeof(kCheckpointMagic));
    put_u32(manifest, static_cast<std::uint32_t>(params.size()));
    for (const Param<float>* p : params) {
        put_u32(manifest, static_cast<std::uint32_t>(p->name.size()));
        manifest.append(p->name);
        manifest.push_back(0);  // dtype f32
        manifest.push_back(static_cast<char>(p->value.rank));
        for (int i = 0; i < p->value.rank; ++i)
            put_u32(manifest, static_cast<std::uint32_t>(p->value.d[i]));
        payload.append(reinterpret_cast<const char*>(p->value.v.data()),
                       p->value.size() * sizeof(float));
    }
    const std::uint64_t checksum = fnv1a(payload.data(), payload.size());
    std::string tail;
    put_u64(tail, checksum);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("save_checkpoint: cannot open " + path);
    f.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    f.write(tail.data(), static_cast<std::streamsize>(tail.size()));
    if (!f) throw IoError("save_checkpoint: write failed for " + path);
}

void load_checkpoint(const std::string& path, const std::vector<Param<float>*>& params) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("load_checkpoint: cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    Reader r{bytes.data(), bytes.data() + bytes.size()};
    r.need(sizeof(kCheckpointMagic));
    if (std::memcmp(r.p, kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
        throw FormatError("load_checkpoint: bad magic");
    r.p += sizeof(kCheckpointMagic);

    struct Entry {
        std::string name;
        int rank = 0;
        std::array<int, 4> dims{1, 1, 1, 1};
        std::size_t count = 1;
    };
    const std::uint32_t n = r.u32();
    std::vector<Entry> entries(n);
    std::map<std::string, int> seen;
    std::size_t payload_floats = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        Entry& e = entries[i];
        const std::uint32_t name_len = r.u32();
        e.name = r.str(name_len);
        if (seen.count(e.name)) throw FormatError("load_checkpoint: duplicate tensor " + e.name);
        seen[e.name] = static_cast<int>(i);
        const std::uint8_t dtype = r.u8();
        if (dtype != 0) throw FormatError("load_checkpoint: unknown dtype code " +
                                          std::to_string(dtype));
        e.rank = r.u8();
        if (e.rank < 1 || e.rank > 4) throw FormatError("load_checkpoint: bad rank");
        for (int d = 0; d < e.rank; ++d) {
            e.dims[d] = static_cast<int>(r.u32());
            if (e.dims[d] < 1) throw FormatError("load_checkpoint: bad dim");
            e.count *= static_cast<std::size_t>(e.dims[d]);
        }
        payload_floats += e.count;
    }

    r.need(payload_floats * sizeof(float) + 8);
    const unsigned char* payload = r.p;
    const std::size_t payload_bytes = payload_floats * sizeof(float);
    Reader tail{payload + payload_bytes, bytes.data() + bytes.size()};
    const std::uint64_t stored = tail.u64();
    if (tail.p != bytes.data() + bytes.size())
        throw FormatError("load_checkpoint: trailing bytes after checksum");
    if (fnv1a(payload, payload_bytes) != stored)
        throw FormatError("load_checkpoint: checksum mismatch");

    if (params.size() != entries.size())
        throw FormatError("load_checkpoint: file has " + std::to_string(entries.size()) +
                          " tensors, model expects " + std::to_string(params.size()));
    std::map<std::string, Param<float>*> by_name;
    for (Param<float>* p : params) {
        if (!by_name.emplace(p->name, p).second)
            throw FormatError("load_checkpoint: duplicate model parameter " + p->name);
    }

    const unsigned char* cursor = payload;
    for (const Entry& e : entries) {
        auto it = by_name.find(e.name);
        if (it == by_name.end())
            throw FormatError("load_checkpoint: tensor " + e.name + " not in model");
        Param<float>* p = it->second;
        if (p->value.rank != e.rank || p->value.size() != e.count)
            throw FormatError("load_checkpoint: shape mismatch for " + e.name);
        for (int d = 0; d < e.rank; ++d)
            if (p->value.d[d] != e.dims[d])
                throw FormatError("load_checkpoint: dim mismatch for " + e.name);
        std::memcpy(p->value.v.data(), cursor, e.count * sizeof(float));
        cursor += e.count * sizeof(float);
    }
}

}  // namespace slca
