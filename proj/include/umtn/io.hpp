#pragma once

#include "umtn/config.hpp"
#include "umtn/dataset.hpp"
#include "umtn/error.hpp"
#include "umtn/model.hpp"

#include <json.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace umtn {

namespace fs = std::filesystem;

inline constexpr int kDatasetVersion = 1;
inline constexpr int kCheckpointVersion = 1;

// ---------------------------------------------------------------------------
// Raw payloads
// ---------------------------------------------------------------------------

namespace io_detail {

inline std::uint64_t byteswap64(std::uint64_t v) {
    v = ((v & 0x00000000FFFFFFFFull) << 32) | ((v & 0xFFFFFFFF00000000ull) >> 32);
    v = ((v & 0x0000FFFF0000FFFFull) << 16) | ((v & 0xFFFF0000FFFF0000ull) >> 16);
    return ((v & 0x00FF00FF00FF00FFull) << 8) | ((v & 0xFF00FF00FF00FF00ull) >> 8);
}

/// Little-endian image of the doubles.
inline std::vector<unsigned char> encode(std::span<const double> values) {
    std::vector<unsigned char> bytes(values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto bits = std::bit_cast<std::uint64_t>(values[i]);
        if constexpr (std::endian::native == std::endian::big) bits = byteswap64(bits);
        std::memcpy(bytes.data() + 8 * i, &bits, 8);
    }
    return bytes;
}

inline std::vector<double> decode(const std::vector<unsigned char>& bytes) {
    std::vector<double> out(bytes.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, bytes.data() + 8 * i, 8);
        if constexpr (std::endian::native == std::endian::big) bits = byteswap64(bits);
        out[i] = std::bit_cast<double>(bits);
    }
    return out;
}

inline std::vector<unsigned char> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw LoadError("missing", "cannot open " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + p.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + p.string());
}

inline void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw DataError("cannot write " + p.string());
    out << text;
}

/// Writes a payload and returns its manifest entry.
inline json save_payload(const fs::path& dir, const std::string& name, std::span<const double> values) {
    const auto bytes = encode(values);
    write_bytes(dir / name, bytes);
    return json{{"bytes", bytes.size()}, {"crc32", hex32(checksum_bytes(bytes))}};
}

/// Reads a payload, checking byte length and checksum against the manifest.
inline std::vector<double> load_payload(const fs::path& dir, const std::string& name, const json& entry,
                                        std::size_t expected_values) {
    const auto bytes = read_bytes(dir / name);
    const std::size_t want = entry.at("bytes").get<std::size_t>();
    if (want != expected_values * 8)
        throw LoadError("shape", "payload " + name + " size in manifest disagrees with recorded shape");
    if (bytes.size() < want) throw LoadError("truncated", "payload " + name + " is truncated");
    if (bytes.size() > want) throw LoadError("truncated", "payload " + name + " has trailing bytes");
    if (hex32(checksum_bytes(bytes)) != entry.at("crc32").get<std::string>())
        throw LoadError("checksum", "checksum mismatch in payload " + name);
    auto values = decode(bytes);
    for (double v : values)
        if (!std::isfinite(v)) throw DataError("payload " + name + " contains NaN or Inf");
    return values;
}

inline json read_manifest(const fs::path& dir, const char* format, int version) {
    json m;
    {
        std::ifstream in(dir / "manifest.json");
        if (!in) throw LoadError("missing", "no manifest.json in " + dir.string());
        try {
            m = json::parse(in);
        } catch (const json::exception& e) {
            throw LoadError("manifest", std::string("malformed manifest: ") + e.what());
        }
    }
    if (m.value("format", "") != format) throw LoadError("format", dir.string() + " is not a " + format);
    if (m.value("version", -1) != version)
        throw LoadError("version", "unsupported " + std::string(format) + " version " +
                                       std::to_string(m.value("version", -1)));
    return m;
}

}  // namespace io_detail

/// Exclusive advisory lock on `<path>.lock`; construction fails fast if the
/// lock is already held.
class PathLock {
public:
    explicit PathLock(const fs::path& path) : lock_(path.string() + ".lock") {
        if (path.has_parent_path() && !path.parent_path().empty()) fs::create_directories(path.parent_path());
        fd_ = ::open(lock_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) throw DataError("output path is locked by another writer: " + lock_.string());
    }
    ~PathLock() {
        if (fd_ >= 0) {
            ::close(fd_);
            std::error_code ec;
            fs::remove(lock_, ec);
        }
    }
    PathLock(const PathLock&) = delete;
    PathLock& operator=(const PathLock&) = delete;

private:
    fs::path lock_;
    int fd_ = -1;
};

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// Directory layout: manifest.json, sites.bin (n x d), sequences.bin (N x L x n),
/// all doubles little-endian.
inline void save_dataset(const SequenceDataset& ds, const fs::path& dir) {
    ds.validate();
    PathLock lock(dir);
    fs::create_directories(dir);
    std::vector<double> sites(static_cast<std::size_t>(ds.sites.coords().size()));
    for (Eigen::Index i = 0; i < ds.sites.size(); ++i)
        for (Eigen::Index k = 0; k < ds.sites.dim(); ++k)
            sites[static_cast<std::size_t>(i * ds.sites.dim() + k)] = ds.sites.coords()(i, k);
    json m;
    m["format"] = "umtn-dataset";
    m["version"] = kDatasetVersion;
    m["endianness"] = "little";
    m["d"] = ds.sites.dim();
    m["n"] = ds.n_sites();
    m["N"] = ds.n_sequences;
    m["sequence_length"] = ds.length;
    m["tau"] = ds.tau;
    m["T"] = ds.horizon;
    m["split_counts"] = {{"train", ds.count(Split::train)}, {"val", ds.count(Split::val)}, {"test", ds.count(Split::test)}};
    std::vector<int> split;
    for (auto s : ds.split) split.push_back(static_cast<int>(s));
    m["split"] = split;
    m["normalized"] = ds.normalized;
    m["stats"] = {{"mean", ds.stats.mean}, {"variance", ds.stats.variance}};
    m["kernel"] = ds.kernel ? json(*ds.kernel) : json(nullptr);
    m["seed"] = ds.seed;
    m["site_hash"] = ds.sites.hash();
    m["payloads"]["sites.bin"] = io_detail::save_payload(dir, "sites.bin", sites);
    m["payloads"]["sequences.bin"] = io_detail::save_payload(dir, "sequences.bin", ds.values);
    io_detail::write_text(dir / "manifest.json", m.dump(2));
}

inline SequenceDataset load_dataset(const fs::path& dir) {
    const json m = io_detail::read_manifest(dir, "umtn-dataset", kDatasetVersion);
    SequenceDataset ds;
    try {
        const auto d = m.at("d").get<std::size_t>();
        const auto n = m.at("n").get<std::size_t>();
        ds.n_sequences = m.at("N").get<std::size_t>();
        ds.length = m.at("sequence_length").get<std::size_t>();
        ds.tau = m.at("tau").get<int>();
        ds.horizon = m.at("T").get<int>();
        const auto sites = io_detail::load_payload(dir, "sites.bin", m.at("payloads").at("sites.bin"), n * d);
        ds.values = io_detail::load_payload(dir, "sequences.bin", m.at("payloads").at("sequences.bin"),
                                            ds.n_sequences * ds.length * n);
        Matrix coords(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < d; ++k)
                coords(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = sites[i * d + k];
        ds.sites = SiteSet(std::move(coords));
        for (int s : m.at("split").get<std::vector<int>>()) {
            if (s < 0 || s > 2) throw LoadError("manifest", "invalid split code " + std::to_string(s));
            ds.split.push_back(static_cast<Split>(s));
        }
        ds.normalized = m.at("normalized").get<bool>();
        ds.stats.mean = m.at("stats").at("mean").get<double>();
        ds.stats.variance = m.at("stats").at("variance").get<double>();
        if (!m.at("kernel").is_null()) ds.kernel = m.at("kernel").get<RadialKernel>();
        ds.seed = m.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw LoadError("manifest", std::string("incomplete dataset manifest: ") + e.what());
    }
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Directory layout: manifest.json (model kind and config, kernel, lambda,
/// site hash, tensor table) and params.bin (tensors concatenated in order).
inline void save_checkpoint(const Forecaster& model, const fs::path& dir, const json& extra = json::object()) {
    PathLock lock(dir);
    fs::create_directories(dir);
    const auto& geo = model.geometry();
    json m;
    m["format"] = "umtn-checkpoint";
    m["version"] = kCheckpointVersion;
    m["endianness"] = "little";
    m["model"] = model.kind();
    if (const auto* u = dynamic_cast<const UmtnModel*>(&model)) m["model_config"] = u->config();
    else if (const auto* d = dynamic_cast<const DrcModel*>(&model)) m["model_config"] = d->config();
    m["kernel"] = geo.system->kernel();
    m["lambda"] = geo.lambda;
    m["scaled_inverse"] = geo.scaled;
    m["site_hash"] = geo.site_hash;
    m["extra"] = extra;
    std::vector<double> flat;
    json table = json::array();
    for (const auto& e : model.params().entries()) {
        table.push_back({{"name", e.name}, {"shape", e.tensor.shape()}, {"offset", flat.size()}});
        flat.insert(flat.end(), e.tensor.value().data(), e.tensor.value().data() + e.tensor.numel());
    }
    m["tensors"] = table;
    m["payloads"]["params.bin"] = io_detail::save_payload(dir, "params.bin", flat);
    io_detail::write_text(dir / "manifest.json", m.dump(2));
}

struct LoadedCheckpoint {
    std::unique_ptr<Forecaster> model;
    json manifest;
};

/// Restores a model and attaches geometry for `sites`, which must be the
/// site set the checkpoint was trained on.
inline LoadedCheckpoint load_checkpoint(const fs::path& dir, const SiteSet& sites) {
    const json m = io_detail::read_manifest(dir, "umtn-checkpoint", kCheckpointVersion);
    LoadedCheckpoint out;
    out.manifest = m;
    try {
        if (m.at("site_hash").get<std::string>() != sites.hash())
            throw ValidationError("checkpoint was trained on a different site set (hash " +
                                  m.at("site_hash").get<std::string>() + ", dataset " + sites.hash() + ")");
        const auto kernel = m.at("kernel").get<RadialKernel>();
        const std::string kind = m.at("model").get<std::string>();
        if (kind == "umtn") {
            auto cfg = m.at("model_config").get<ModelConfig>();
            auto model = std::make_unique<UmtnModel>(cfg, 0);
            model->attach(kernel, sites);
            out.model = std::move(model);
        } else if (kind == "drc") {
            auto cfg = m.at("model_config").get<DrcConfig>();
            auto model = std::make_unique<DrcModel>(cfg, 0);
            model->attach(kernel, sites);
            out.model = std::move(model);
        } else {
            throw LoadError("manifest", "unknown model kind '" + kind + "'");
        }
        auto& store = out.model->params();
        std::size_t total = 0;
        for (const auto& e : store.entries()) total += static_cast<std::size_t>(e.tensor.numel());
        const auto flat = io_detail::load_payload(dir, "params.bin", m.at("payloads").at("params.bin"), total);
        const auto& table = m.at("tensors");
        if (table.size() != store.size()) throw LoadError("manifest", "tensor table does not match model");
        for (std::size_t i = 0; i < table.size(); ++i) {
            auto& e = store.entries()[i];
            if (table[i].at("name").get<std::string>() != e.name ||
                table[i].at("shape").get<ad::Shape>() != e.tensor.shape())
                throw LoadError("manifest", "tensor '" + e.name + "' does not match the model layout");
            const auto off = table[i].at("offset").get<std::size_t>();
            std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), e.tensor.numel(), e.tensor.mutable_value().data());
        }
    } catch (const json::exception& e) {
        throw LoadError("manifest", std::string("incomplete checkpoint manifest: ") + e.what());
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

namespace io_detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, ',')) {
        const auto b = cur.find_first_not_of(" \t\r");
        const auto e = cur.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string{} : cur.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        if (!std::isfinite(v)) throw DataError("non-finite value at " + where);
        return v;
    } catch (const std::logic_error&) {
        throw DataError("cannot parse number '" + s + "' at " + where);
    }
}

inline long parse_long(const std::string& s, const std::string& where) {
    long v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) throw DataError("cannot parse integer '" + s + "' at " + where);
    return v;
}

/// Reads a CSV with a header row; returns the data rows.
inline std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw DataError("cannot open " + p.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (header) {
            header = false;
            continue;
        }
        rows.push_back(split_csv_line(line));
    }
    return rows;
}

/// Ids sort numerically when every id is an integer, else lexicographically.
inline std::vector<std::string> sorted_ids(const std::set<std::string>& ids) {
    std::vector<std::string> out(ids.begin(), ids.end());
    const bool numeric = std::all_of(out.begin(), out.end(), [](const std::string& s) {
        long v;
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        return r.ec == std::errc{} && r.ptr == s.data() + s.size();
    });
    if (numeric)
        std::sort(out.begin(), out.end(), [](const std::string& a, const std::string& b) { return std::stol(a) < std::stol(b); });
    return out;
}

}  // namespace io_detail

/// Builds a dataset from `sites_csv` (site_id, coord_1..coord_d) and
/// `sequences_csv` (sequence_id, time_index, site_id, value). Sequences and
/// sites are ordered by id, times by index, so row order does not matter.
/// Splits are assigned sequentially from `split_counts`.
inline SequenceDataset ingest_csv(const fs::path& sites_csv, const fs::path& sequences_csv, int tau, int horizon,
                                  const std::array<std::size_t, 3>& split_counts) {
    const auto site_rows = io_detail::read_csv(sites_csv);
    if (site_rows.empty()) throw DataError("sites CSV has no rows");
    const std::size_t d = site_rows[0].size() - 1;
    if (d < 1) throw DataError("sites CSV needs site_id and at least one coordinate");
    std::map<std::string, std::vector<double>> site_coords;
    for (std::size_t r = 0; r < site_rows.size(); ++r) {
        const auto& row = site_rows[r];
        const std::string where = sites_csv.string() + " row " + std::to_string(r + 2);
        if (row.size() != d + 1) throw DataError("wrong column count at " + where);
        std::vector<double> c;
        for (std::size_t k = 1; k <= d; ++k) c.push_back(io_detail::parse_double(row[k], where));
        if (!site_coords.emplace(row[0], c).second) throw ValidationError("duplicate site id '" + row[0] + "'");
    }
    std::set<std::string> site_id_set;
    for (const auto& [id, _] : site_coords) site_id_set.insert(id);
    const auto site_ids = io_detail::sorted_ids(site_id_set);
    std::map<std::string, std::size_t> site_index;
    Matrix coords(static_cast<Eigen::Index>(site_ids.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < site_ids.size(); ++i) {
        site_index[site_ids[i]] = i;
        for (std::size_t k = 0; k < d; ++k)
            coords(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = site_coords[site_ids[i]][k];
    }

    const auto seq_rows = io_detail::read_csv(sequences_csv);
    std::set<std::string> seq_id_set;
    std::set<long> times;
    for (std::size_t r = 0; r < seq_rows.size(); ++r) {
        const auto& row = seq_rows[r];
        const std::string where = sequences_csv.string() + " row " + std::to_string(r + 2);
        if (row.size() != 4) throw DataError("wrong column count at " + where);
        seq_id_set.insert(row[0]);
        times.insert(io_detail::parse_long(row[1], where));
        if (!site_index.count(row[2])) throw DataError("unknown site id '" + row[2] + "' at " + where);
    }
    if (seq_id_set.empty()) throw DataError("sequences CSV has no rows");
    const auto seq_ids = io_detail::sorted_ids(seq_id_set);
    std::map<std::string, std::size_t> seq_index;
    for (std::size_t k = 0; k < seq_ids.size(); ++k) seq_index[seq_ids[k]] = k;
    const std::vector<long> time_list(times.begin(), times.end());
    std::map<long, std::size_t> time_index;
    for (std::size_t t = 0; t < time_list.size(); ++t) time_index[time_list[t]] = t;

    SequenceDataset ds;
    ds.n_sequences = seq_ids.size();
    ds.length = time_list.size();
    ds.tau = tau;
    ds.horizon = horizon;
    const std::size_t n = site_ids.size();
    ds.values.assign(ds.n_sequences * ds.length * n, 0.0);
    std::vector<char> filled(ds.values.size(), 0);
    for (std::size_t r = 0; r < seq_rows.size(); ++r) {
        const auto& row = seq_rows[r];
        const std::string where = sequences_csv.string() + " row " + std::to_string(r + 2);
        const std::size_t idx = (seq_index[row[0]] * ds.length + time_index[io_detail::parse_long(row[1], where)]) * n +
                                site_index[row[2]];
        if (filled[idx]) throw DataError("duplicate cell at " + where);
        filled[idx] = 1;
        ds.values[idx] = io_detail::parse_double(row[3], where);
    }
    for (std::size_t idx = 0; idx < filled.size(); ++idx) {
        if (filled[idx]) continue;
        const std::size_t k = idx / (ds.length * n), t = (idx / n) % ds.length, s = idx % n;
        throw DataError("missing value for sequence '" + seq_ids[k] + "', time " + std::to_string(time_list[t]) +
                        ", site '" + site_ids[s] + "'");
    }
    ds.sites = SiteSet(std::move(coords));
    if (split_counts[0] + split_counts[1] + split_counts[2] != ds.n_sequences)
        throw ConfigError("split counts must sum to the number of sequences (" + std::to_string(ds.n_sequences) + ")");
    ds.split = sequential_split(split_counts[0], split_counts[1], split_counts[2]);
    if (static_cast<std::size_t>(tau + horizon) > ds.length) throw ConfigError("tau + T exceeds the sequence length");
    ds.validate();
    ds.stats = split_counts[0] > 0 ? compute_training_stats(ds) : NormalizationStats{};
    return ds;
}

}  // namespace umtn
