#include "hf/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <map>
#include <set>

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace hf {

namespace {

constexpr char kMagic[4] = {'H', 'F', 'C', 'K'};

struct Writer {
    std::FILE* f;
    explicit Writer(const std::string& path) : f(std::fopen(path.c_str(), "wb")) {
        if (!f) throw IoError("cannot open checkpoint for writing: " + path);
    }
    ~Writer() {
        if (f) std::fclose(f);
    }
    void bytes(const void* p, size_t n) {
        if (std::fwrite(p, 1, n, f) != n) throw IoError("short write to checkpoint");
    }
    template <typename T>
    void pod(T v) {
        bytes(&v, sizeof(T));
    }
    void tensor(const std::string& name, const Tensor<float>& t) {
        pod<uint32_t>(static_cast<uint32_t>(name.size()));
        bytes(name.data(), name.size());
        pod<uint32_t>(static_cast<uint32_t>(t.rank()));
        for (int i = 0; i < t.rank(); ++i) pod<uint32_t>(static_cast<uint32_t>(t.dim(i)));
        bytes(t.data(), t.numel() * sizeof(float));
    }
    void raw_record(const std::string& name, const std::vector<float>& v) {
        pod<uint32_t>(static_cast<uint32_t>(name.size()));
        bytes(name.data(), name.size());
        pod<uint32_t>(1u);
        pod<uint32_t>(static_cast<uint32_t>(v.size()));
        bytes(v.data(), v.size() * sizeof(float));
    }
};

struct Reader {
    std::FILE* f;
    std::string path;
    std::string current_record = "<header>";
    explicit Reader(const std::string& p) : f(std::fopen(p.c_str(), "rb")), path(p) {
        if (!f) throw CheckpointError("cannot open checkpoint: " + p);
    }
    ~Reader() {
        if (f) std::fclose(f);
    }
    void bytes(void* p, size_t n) {
        if (std::fread(p, 1, n, f) != n)
            throw CheckpointError("checkpoint truncated while reading record '" + current_record +
                                  "' in " + path);
    }
    template <typename T>
    T pod() {
        T v;
        bytes(&v, sizeof(T));
        return v;
    }
    std::string name() {
        const uint32_t len = pod<uint32_t>();
        if (len > 4096) throw CheckpointError("corrupt record name length in " + path);
        std::string s(len, '\0');
        bytes(s.data(), len);
        return s;
    }
    bool at_eof() {
        const int c = std::fgetc(f);
        if (c == EOF) return true;
        std::ungetc(c, f);
        return false;
    }
};

struct RecordView {
    std::vector<uint32_t> dims;
    std::vector<float> data;
};

}  // namespace

void save_checkpoint(const std::string& path, const NamedParams<float>& params,
                     const Adam<float>* optimizer, const CheckpointState& state,
                     uint64_t config_hash) {
    if (optimizer && optimizer->m.size() != params.size())
        throw CheckpointError("optimizer state does not cover the parameter set");
    std::set<std::string> seen;
    for (const auto& p : params)
        if (!seen.insert(p.name).second)
            throw CheckpointError("duplicate parameter name '" + p.name + "'");

    Writer w(path);
    w.bytes(kMagic, 4);
    w.pod<uint32_t>(kCheckpointVersion);
    w.pod<uint64_t>(config_hash);
    w.pod<uint64_t>(state.train_step);
    w.pod<uint64_t>(state.rng_state);
    w.pod<uint64_t>(state.rng_inc);
    w.pod<float>(state.loss_ema);
    w.pod<int64_t>(optimizer ? optimizer->step_count : state.adam_step);

    uint32_t n_records = static_cast<uint32_t>(params.size());
    if (optimizer) n_records += 2 * static_cast<uint32_t>(params.size());
    w.pod<uint32_t>(n_records);
    for (const auto& p : params) w.tensor(p.name, p.tensor);
    if (optimizer) {
        for (size_t i = 0; i < params.size(); ++i)
            w.raw_record("adam.m/" + params[i].name, optimizer->m[i]);
        for (size_t i = 0; i < params.size(); ++i)
            w.raw_record("adam.v/" + params[i].name, optimizer->v[i]);
    }
}

static void read_header(Reader& r, uint32_t& version, uint64_t& config_hash,
                        CheckpointState& state) {
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointError("not a checkpoint (bad magic) in " + r.path);
    version = r.pod<uint32_t>();
    if (version != kCheckpointVersion)
        throw CheckpointError("checkpoint version " + std::to_string(version) +
                              " unsupported (expected " + std::to_string(kCheckpointVersion) +
                              ") in " + r.path);
    config_hash = r.pod<uint64_t>();
    state.train_step = r.pod<uint64_t>();
    state.rng_state = r.pod<uint64_t>();
    state.rng_inc = r.pod<uint64_t>();
    state.loss_ema = r.pod<float>();
    state.adam_step = r.pod<int64_t>();
}

uint64_t checkpoint_config_hash(const std::string& path) {
    Reader r(path);
    uint32_t version;
    uint64_t hash;
    CheckpointState st;
    read_header(r, version, hash, st);
    return hash;
}

CheckpointState load_checkpoint(const std::string& path, NamedParams<float>& params,
                                Adam<float>* optimizer, uint64_t expected_config_hash,
                                bool allow_config_mismatch) {
    Reader r(path);
    uint32_t version;
    uint64_t config_hash;
    CheckpointState state;
    read_header(r, version, config_hash, state);
    if (config_hash != expected_config_hash && !allow_config_mismatch)
        throw CheckpointError("checkpoint config hash mismatch in " + path +
                              " (pass the explicit override to load anyway)");

    const uint32_t n_records = r.pod<uint32_t>();
    std::map<std::string, RecordView> records;
    for (uint32_t i = 0; i < n_records; ++i) {
        r.current_record = "<record " + std::to_string(i) + " name>";
        const std::string name = r.name();
        r.current_record = name;
        RecordView rec;
        const uint32_t rank = r.pod<uint32_t>();
        if (rank > 8) throw CheckpointError("corrupt rank for record '" + name + "' in " + path);
        uint64_t numel = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            rec.dims.push_back(r.pod<uint32_t>());
            numel *= rec.dims.back();
        }
        if (numel > (1ull << 31))
            throw CheckpointError("corrupt dims for record '" + name + "' in " + path);
        rec.data.resize(numel);
        r.bytes(rec.data.data(), numel * sizeof(float));
        if (!records.emplace(name, std::move(rec)).second)
            throw CheckpointError("duplicate record '" + name + "' in " + path);
    }
    if (!r.at_eof()) throw CheckpointError("trailing bytes after records in " + path);

    for (auto& p : params) {
        auto it = records.find(p.name);
        if (it == records.end())
            throw CheckpointError("checkpoint is missing parameter '" + p.name + "' in " + path);
        if (it->second.data.size() != p.tensor.numel())
            throw CheckpointError("parameter '" + p.name + "' has " +
                                  std::to_string(it->second.data.size()) + " values, expected " +
                                  std::to_string(p.tensor.numel()) + " in " + path);
        std::copy(it->second.data.begin(), it->second.data.end(), p.tensor.data());
    }
    if (optimizer) {
        optimizer->m.assign(params.size(), {});
        optimizer->v.assign(params.size(), {});
        optimizer->step_count = state.adam_step;
        for (size_t i = 0; i < params.size(); ++i) {
            for (const char* kind : {"m", "v"}) {
                const std::string rec_name = std::string("adam.") + kind + "/" + params[i].name;
                auto it = records.find(rec_name);
                if (it == records.end())
                    throw CheckpointError("checkpoint is missing optimizer record '" + rec_name +
                                          "' in " + path);
                if (it->second.data.size() != params[i].tensor.numel())
                    throw CheckpointError("optimizer record '" + rec_name + "' size mismatch in " +
                                          path);
                (kind[0] == 'm' ? optimizer->m : optimizer->v)[i] = it->second.data;
            }
        }
    }
    return state;
}

}  // namespace hf
