#include "mdjpt/data.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mdjpt/error.hpp"

namespace fs = std::filesystem;

namespace mdjpt::data {

namespace {

constexpr char kEpochMagic[8] = {'M', 'D', 'J', 'P', 'T', '1', '\0', '\0'};
constexpr std::uint32_t kEpochVersion = 1;
constexpr char kCkptMagic[8] = {'M', 'D', 'J', 'P', 'T', 'C', 'K', 'P'};

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw Error("CorruptHeader", "unexpected end of file");
    return v;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

void TrialEpoch::validate() const {
    if (data.rank() != 2) throw Error("DimensionMismatch", "epoch data must be 2-D");
    if (data.dim(0) != channel_names.size())
        throw Error("DimensionMismatch", "rows(data) != len(channel_names)");
    if (sampling_rate_hz <= 0) throw Error("SchemaViolation", "sampling_rate_hz");
    for (double v : data.v)
        if (!std::isfinite(v)) throw Error("NonFiniteActivation", "epoch contains NaN/Inf");
}

std::string DatasetManifest::epoch_path(std::size_t subject, std::size_t trial) const {
    auto it = paths.find({subject, trial});
    if (it == paths.end())
        throw Error("MissingFile", "no epoch path for subject " + std::to_string(subject) +
                                       " trial " + std::to_string(trial));
    fs::path p(it->second);
    if (p.is_absolute()) return p.string();
    return (fs::path(root_dir) / p).string();
}

int DatasetManifest::label(std::size_t trial) const {
    auto it = emotion_labels.find(trial);
    if (it == emotion_labels.end())
        throw Error("SchemaViolation", "emotion_labels missing trial " + std::to_string(trial));
    return it->second;
}

int DatasetManifest::n_classes() const {
    int mx = -1;
    for (const auto& [t, c] : emotion_labels) mx = std::max(mx, c);
    return mx + 1;
}

void write_epoch(const std::string& path, const TrialEpoch& epoch) {
    epoch.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("MissingFile", "cannot open for write: " + path);
    char header[64] = {};
    std::memcpy(header, kEpochMagic, 8);
    const std::uint32_t version = kEpochVersion;
    const std::uint32_t c = static_cast<std::uint32_t>(epoch.channels());
    const std::uint32_t t = static_cast<std::uint32_t>(epoch.samples());
    std::memcpy(header + 8, &version, 4);
    std::memcpy(header + 12, &c, 4);
    std::memcpy(header + 16, &t, 4);
    std::memcpy(header + 20, &epoch.sampling_rate_hz, 8);
    out.write(header, 64);
    std::vector<float> buf(epoch.data.numel());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(epoch.data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw Error("MissingFile", "short write: " + path);
}

void read_epoch_header(const std::string& path, std::uint32_t* channels,
                       std::uint32_t* samples, double* rate) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("MissingFile", path);
    char header[64];
    in.read(header, 64);
    if (!in || std::memcmp(header, kEpochMagic, 8) != 0)
        throw Error("CorruptHeader", "bad magic in " + path);
    std::uint32_t version;
    std::memcpy(&version, header + 8, 4);
    if (version != kEpochVersion) throw Error("CorruptHeader", "unsupported version");
    std::memcpy(channels, header + 12, 4);
    std::memcpy(samples, header + 16, 4);
    std::memcpy(rate, header + 20, 8);
}

TrialEpoch read_epoch(const std::string& path) {
    std::uint32_t c, t;
    double rate;
    read_epoch_header(path, &c, &t, &rate);
    std::ifstream in(path, std::ios::binary);
    in.seekg(64);
    std::vector<float> buf(static_cast<std::size_t>(c) * t);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != buf.size() * sizeof(float))
        throw Error("DimensionMismatch",
                    "file shorter than header-declared " + std::to_string(c) + "x" +
                        std::to_string(t) + ": " + path);
    TrialEpoch epoch;
    epoch.data = nn::Tensor({c, t});
    for (std::size_t i = 0; i < buf.size(); ++i) epoch.data[i] = static_cast<double>(buf[i]);
    epoch.channel_names.resize(c);  // names live in the manifest
    for (std::uint32_t i = 0; i < c; ++i) epoch.channel_names[i] = "ch" + std::to_string(i);
    epoch.sampling_rate_hz = rate;
    return epoch;
}

std::string data_root() {
    const char* env = std::getenv("MDJPT_DATA_ROOT");
    return env ? env : ".";
}

DatasetManifest load_manifest(const std::string& path, bool check_files) {
    std::ifstream in(path);
    if (!in) throw Error("MissingFile", path);
    DatasetManifest m;
    m.root_dir = fs::path(path).has_parent_path() ? fs::path(path).parent_path().string()
                                                  : data_root();
    bool have_version = false, have_rate = false, have_subjects = false, have_trials = false;
    enum class Section { None, Labels, Trials } section = Section::None;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        if (line == "labels:") { section = Section::Labels; continue; }
        if (line == "trials:") { section = Section::Trials; continue; }
        if (section == Section::Labels) {
            std::istringstream ss(line);
            std::size_t trial;
            int cls;
            if (!(ss >> trial >> cls))
                throw Error("SchemaViolation", "labels row at line " + std::to_string(lineno));
            m.emotion_labels[trial] = cls;
            continue;
        }
        if (section == Section::Trials) {
            std::istringstream ss(line);
            std::size_t subject, trial;
            std::string rel;
            if (!(ss >> subject >> trial >> rel))
                throw Error("SchemaViolation", "trials row at line " + std::to_string(lineno));
            if (!m.paths.emplace(std::make_pair(subject, trial), rel).second)
                throw Error("DuplicateTrial", "subject " + std::to_string(subject) + " trial " +
                                                  std::to_string(trial));
            continue;
        }
        const auto colon = line.find(':');
        if (colon == std::string::npos)
            throw Error("SchemaViolation", "expected key: value at line " + std::to_string(lineno));
        const std::string key = trim(line.substr(0, colon));
        const std::string value = trim(line.substr(colon + 1));
        if (key == "schema_version") {
            if (value != "1") throw Error("SchemaViolation", "schema_version");
            have_version = true;
        } else if (key == "dataset_id") {
            m.dataset_id = value;
        } else if (key == "sampling_rate_hz") {
            m.sampling_rate_hz = std::stod(value);
            have_rate = true;
        } else if (key == "channel_names") {
            std::istringstream ss(value);
            std::string name;
            while (ss >> name) m.channel_names.push_back(name);
        } else if (key == "n_subjects") {
            m.n_subjects = std::stoul(value);
            have_subjects = true;
        } else if (key == "n_trials_per_subject") {
            m.n_trials_per_subject = std::stoul(value);
            have_trials = true;
        } else {
            throw Error("SchemaViolation", "unknown key: " + key);
        }
    }
    if (!have_version) throw Error("SchemaViolation", "schema_version");
    if (m.dataset_id.empty()) throw Error("SchemaViolation", "dataset_id");
    if (!have_rate || m.sampling_rate_hz <= 0) throw Error("SchemaViolation", "sampling_rate_hz");
    if (m.channel_names.empty()) throw Error("SchemaViolation", "channel_names");
    if (!have_subjects || m.n_subjects == 0) throw Error("SchemaViolation", "n_subjects");
    if (!have_trials || m.n_trials_per_subject == 0)
        throw Error("SchemaViolation", "n_trials_per_subject");
    {
        std::vector<std::string> sorted = m.channel_names;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw Error("SchemaViolation", "channel_names must be unique");
    }
    for (std::size_t t = 0; t < m.n_trials_per_subject; ++t)
        if (!m.emotion_labels.count(t))
            throw Error("SchemaViolation", "emotion_labels missing trial " + std::to_string(t));
    for (std::size_t s = 0; s < m.n_subjects; ++s)
        for (std::size_t t = 0; t < m.n_trials_per_subject; ++t)
            if (!m.paths.count({s, t}))
                throw Error("SchemaViolation", "missing epoch path for subject " +
                                                   std::to_string(s) + " trial " +
                                                   std::to_string(t));
    if (m.paths.size() != m.n_subjects * m.n_trials_per_subject)
        throw Error("DuplicateTrial", "paths outside the subject x trial cross-product");
    if (check_files) {
        for (std::size_t s = 0; s < m.n_subjects; ++s)
            for (std::size_t t = 0; t < m.n_trials_per_subject; ++t) {
                std::uint32_t c, n;
                double rate;
                read_epoch_header(m.epoch_path(s, t), &c, &n, &rate);
            }
    }
    return m;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("MissingFile", "cannot open for write: " + path);
    out << "schema_version: 1\n";
    out << "dataset_id: " << m.dataset_id << "\n";
    out << "sampling_rate_hz: " << m.sampling_rate_hz << "\n";
    out << "channel_names:";
    for (const auto& c : m.channel_names) out << ' ' << c;
    out << "\nn_subjects: " << m.n_subjects << "\n";
    out << "n_trials_per_subject: " << m.n_trials_per_subject << "\n";
    out << "labels:\n";
    for (const auto& [t, c] : m.emotion_labels) out << "  " << t << ' ' << c << "\n";
    out << "trials:\n";
    for (const auto& [st, p] : m.paths) out << "  " << st.first << ' ' << st.second << ' ' << p
                                            << "\n";
}

void save_checkpoint(const std::string& path, const ModelCheckpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("MissingFile", "cannot open for write: " + path);
    out.write(kCkptMagic, 8);
    put<std::uint32_t>(out, 1);
    put<std::uint64_t>(out, ckpt.seed);
    put<std::uint64_t>(out, ckpt.step);
    put<std::uint64_t>(out, ckpt.config_snapshot.size());
    out.write(ckpt.config_snapshot.data(),
              static_cast<std::streamsize>(ckpt.config_snapshot.size()));
    put<std::uint64_t>(out, ckpt.params.size());
    for (const auto& [name, t] : ckpt.params) {
        put<std::uint64_t>(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint64_t>(out, t.rank());
        for (auto d : t.shape) put<std::uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(t.v.data()),
                  static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
    if (!out) throw Error("MissingFile", "short write: " + path);
}

ModelCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("MissingFile", path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCkptMagic, 8) != 0)
        throw Error("CorruptHeader", "bad checkpoint magic: " + path);
    if (get<std::uint32_t>(in) != 1) throw Error("CorruptHeader", "unsupported version");
    ModelCheckpoint ckpt;
    ckpt.seed = get<std::uint64_t>(in);
    ckpt.step = get<std::uint64_t>(in);
    const auto cfg_len = get<std::uint64_t>(in);
    ckpt.config_snapshot.resize(cfg_len);
    in.read(ckpt.config_snapshot.data(), static_cast<std::streamsize>(cfg_len));
    const auto n = get<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto name_len = get<std::uint64_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(name_len));
        const auto rank = get<std::uint64_t>(in);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = get<std::uint64_t>(in);
        nn::Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.v.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (!in) throw Error("CorruptHeader", "truncated checkpoint: " + path);
        ckpt.params.emplace(std::move(name), std::move(t));
    }
    return ckpt;
}

std::uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("MissingFile", path);
    std::uint64_t h = 1469598103934665603ull;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!in) break;
    }
    return h;
}

}  // namespace mdjpt::data
