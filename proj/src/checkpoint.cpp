#include "hz/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace hz {

namespace {

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& out, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(out, v);
}

struct Reader {
    std::string bytes;
    size_t pos = 0;
    std::string path;

    void need(size_t n, const char* what) {
        if (pos + n > bytes.size())
            throw LengthError(std::string("checkpoint: truncated ") + what + " in " + path);
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(bytes[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(bytes[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    float f32(const char* what) {
        uint32_t v = u32(what);
        float f;
        std::memcpy(&f, &v, 4);
        return f;
    }
    std::string str(size_t n, const char* what) {
        need(n, what);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
};

Reader read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StorageError("checkpoint: cannot open " + path);
    Reader r;
    r.path = path;
    r.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return r;
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("checkpoint: cannot open for write " + path);
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw StorageError("checkpoint: short write to " + path);
}

}  // namespace

void save_checkpoint(const std::string& path, const WeightVector& v) {
    std::string out;
    out.reserve(24 + v.data.size() * 4);
    out += "HZW1";
    out.push_back(1);  // little-endian payload
    out.append(3, '\0');
    put_u64(out, v.layout_hash);
    put_u32(out, uint32_t(v.data.size()));
    put_u32(out, uint32_t(v.model_id));
    put_u32(out, uint32_t(v.epoch));
    for (float f : v.data) put_f32(out, f);
    write_file(path, out);
}

WeightVector load_checkpoint(const std::string& path, uint64_t expected_layout_hash) {
    Reader r = read_file(path);
    if (r.str(4, "magic") != "HZW1") throw FormatError("checkpoint: bad magic in " + path);
    const std::string flags = r.str(4, "flags");
    if (uint8_t(flags[0]) != 1) throw FormatError("checkpoint: unsupported endian flag in " + path);
    WeightVector v;
    v.layout_hash = r.u64("layout hash");
    const uint32_t n = r.u32("count");
    v.model_id = int32_t(r.u32("model id"));
    v.epoch = int32_t(r.u32("epoch"));
    v.data.resize(n);
    r.need(size_t(n) * 4, "payload");
    for (uint32_t i = 0; i < n; ++i) v.data[i] = r.f32("payload");
    if (r.pos != r.bytes.size()) throw LengthError("checkpoint: trailing bytes in " + path);
    if (expected_layout_hash != 0 && v.layout_hash != expected_layout_hash)
        throw ConsistencyError("checkpoint: layout hash mismatch in " + path);
    return v;
}

void save_bundle(const std::string& path, const std::string& config,
                 const std::vector<std::pair<std::string, const Tensor*>>& params) {
    std::string out;
    out += "HZB1";
    out.push_back(1);
    out.append(3, '\0');
    put_u32(out, uint32_t(config.size()));
    out += config;
    put_u32(out, uint32_t(params.size()));
    for (const auto& [name, t] : params) {
        put_u32(out, uint32_t(name.size()));
        out += name;
        put_u32(out, uint32_t(t->rank()));
        for (int d : t->shape()) put_u32(out, uint32_t(d));
        for (size_t i = 0; i < t->numel(); ++i) put_f32(out, t->data()[i]);
    }
    write_file(path, out);
}

Bundle load_bundle(const std::string& path) {
    Reader r = read_file(path);
    if (r.str(4, "magic") != "HZB1") throw FormatError("bundle: bad magic in " + path);
    const std::string flags = r.str(4, "flags");
    if (uint8_t(flags[0]) != 1) throw FormatError("bundle: unsupported endian flag in " + path);
    Bundle b;
    b.config = r.str(r.u32("config length"), "config");
    const uint32_t count = r.u32("array count");
    b.arrays.resize(count);
    for (uint32_t i = 0; i < count; ++i) {
        NamedArray& a = b.arrays[i];
        a.name = r.str(r.u32("name length"), "name");
        const uint32_t rank = r.u32("rank");
        if (rank == 0 || rank > 8) throw FormatError("bundle: implausible rank in " + path);
        size_t numel = 1;
        a.shape.resize(rank);
        for (uint32_t d = 0; d < rank; ++d) {
            a.shape[d] = int(r.u32("dim"));
            if (a.shape[d] <= 0) throw FormatError("bundle: nonpositive dim in " + path);
            numel *= size_t(a.shape[d]);
        }
        a.data.resize(numel);
        for (size_t j = 0; j < numel; ++j) a.data[j] = r.f32("array payload");
    }
    if (r.pos != r.bytes.size()) throw LengthError("bundle: trailing bytes in " + path);
    return b;
}

}  // namespace hz
