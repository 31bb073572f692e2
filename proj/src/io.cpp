#include "difflab/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "array payloads are little-endian; big-endian hosts are unsupported");

namespace difflab {

namespace {

constexpr const char* kMagic = "difflab-manifest v1";

struct ArrayDecl {
    std::string name;
    long rows = 0, cols = 0;
    bool trainable = false;
};

struct Manifest {
    std::map<std::string, std::string> meta;
    std::vector<ArrayDecl> arrays;
    std::vector<Mat> values;  // parallel to arrays
};

void write_manifest(const std::string& path, const Manifest& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << kMagic << "\n";
    for (const auto& [k, v] : m.meta) os << "meta " << k << " " << v << "\n";
    for (const auto& a : m.arrays)
        os << "array " << a.name << " " << a.rows << " " << a.cols << " f32 "
           << (a.trainable ? "trainable" : "frozen") << "\n";
    os << "@data\n";
    for (std::size_t i = 0; i < m.arrays.size(); ++i) {
        const Mat& v = m.values[i];
        std::vector<float> buf(static_cast<std::size_t>(v.size()));
        std::size_t p = 0;
        for (long r = 0; r < v.rows(); ++r)
            for (long c = 0; c < v.cols(); ++c) buf[p++] = static_cast<float>(v(r, c));
        os.write(reinterpret_cast<const char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

Manifest read_manifest(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(is, line) || line != kMagic)
        throw std::runtime_error(path + ": not a difflab manifest");
    Manifest m;
    while (std::getline(is, line)) {
        if (line == "@data") break;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "meta") {
            std::string key;
            ls >> key;
            std::string value;
            std::getline(ls, value);
            if (!value.empty() && value.front() == ' ') value.erase(0, 1);
            m.meta[key] = value;
        } else if (tag == "array") {
            ArrayDecl a;
            std::string dtype, flag;
            ls >> a.name >> a.rows >> a.cols >> dtype >> flag;
            if (!ls || dtype != "f32" || (flag != "trainable" && flag != "frozen"))
                throw std::runtime_error(path + ": bad array line: " + line);
            a.trainable = flag == "trainable";
            m.arrays.push_back(a);
        } else if (!tag.empty()) {
            throw std::runtime_error(path + ": unknown manifest line: " + line);
        }
    }
    for (const auto& a : m.arrays) {
        std::vector<float> buf(static_cast<std::size_t>(a.rows * a.cols));
        is.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
        if (!is) throw std::runtime_error(path + ": truncated array payload for " + a.name);
        Mat v(a.rows, a.cols);
        std::size_t p = 0;
        for (long r = 0; r < a.rows; ++r)
            for (long c = 0; c < a.cols; ++c) v(r, c) = static_cast<double>(buf[p++]);
        m.values.push_back(std::move(v));
    }
    return m;
}

std::string meta_at(const Manifest& m, const std::string& key) {
    auto it = m.meta.find(key);
    if (it == m.meta.end()) throw std::runtime_error("manifest missing meta key: " + key);
    return it->second;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    Manifest m;
    m.meta["kind"] = "checkpoint";
    m.meta["schedule.T"] = std::to_string(ckpt.schedule.T);
    m.meta["schedule.beta_start"] = fmt(ckpt.schedule.beta_start);
    m.meta["schedule.beta_end"] = fmt(ckpt.schedule.beta_end);
    const DenoiserConfig& c = ckpt.params.config;
    m.meta["model.data_dim"] = std::to_string(c.data_dim);
    m.meta["model.hidden_width"] = std::to_string(c.hidden_width);
    m.meta["model.depth"] = std::to_string(c.depth);
    m.meta["model.time_embed_dim"] = std::to_string(c.time_embed_dim);
    m.meta["model.cond_embed_dim"] = std::to_string(c.cond_embed_dim);
    m.meta["model.num_conditions"] = std::to_string(c.num_conditions);
    m.meta["lora.rank"] = std::to_string(ckpt.adapter ? ckpt.adapter->rank : 0);
    for (const auto& [k, v] : ckpt.extra_meta) m.meta["x." + k] = v;

    for (const auto& e : ckpt.params.entries) {
        m.arrays.push_back({e.name, e.value.rows(), e.value.cols(), e.trainable});
        m.values.push_back(e.value);
    }
    if (ckpt.adapter) {
        for (const auto& le : ckpt.adapter->entries) {
            m.arrays.push_back({"lora." + le.name + ".B", le.B.rows(), le.B.cols(), true});
            m.values.push_back(le.B);
            m.arrays.push_back({"lora." + le.name + ".A", le.A.rows(), le.A.cols(), true});
            m.values.push_back(le.A);
        }
    }
    write_manifest(path, m);
}

Checkpoint load_checkpoint(const std::string& path) {
    Manifest m = read_manifest(path);
    if (meta_at(m, "kind") != "checkpoint")
        throw std::runtime_error(path + ": manifest is not a checkpoint");
    Checkpoint ckpt;
    ckpt.schedule.T = std::stoi(meta_at(m, "schedule.T"));
    ckpt.schedule.beta_start = std::stod(meta_at(m, "schedule.beta_start"));
    ckpt.schedule.beta_end = std::stod(meta_at(m, "schedule.beta_end"));
    DenoiserConfig c;
    c.data_dim = std::stoi(meta_at(m, "model.data_dim"));
    c.hidden_width = std::stoi(meta_at(m, "model.hidden_width"));
    c.depth = std::stoi(meta_at(m, "model.depth"));
    c.time_embed_dim = std::stoi(meta_at(m, "model.time_embed_dim"));
    c.cond_embed_dim = std::stoi(meta_at(m, "model.cond_embed_dim"));
    c.num_conditions = std::stoi(meta_at(m, "model.num_conditions"));
    c.validate();
    ckpt.params.config = c;
    const int rank = std::stoi(meta_at(m, "lora.rank"));
    if (rank > 0) {
        ckpt.adapter.emplace();
        ckpt.adapter->rank = rank;
    }
    for (const auto& [k, v] : m.meta)
        if (k.rfind("x.", 0) == 0) ckpt.extra_meta[k.substr(2)] = v;

    for (std::size_t i = 0; i < m.arrays.size(); ++i) {
        const ArrayDecl& a = m.arrays[i];
        if (a.name.rfind("lora.", 0) == 0) {
            if (!ckpt.adapter) throw std::runtime_error(path + ": lora array without lora.rank");
            const bool is_b = a.name.size() > 2 && a.name.substr(a.name.size() - 2) == ".B";
            const std::string base = a.name.substr(5, a.name.size() - 7);
            if (is_b) {
                ckpt.adapter->entries.push_back({base, m.values[i], Mat()});
            } else {
                if (ckpt.adapter->entries.empty() || ckpt.adapter->entries.back().name != base)
                    throw std::runtime_error(path + ": lora arrays must come in B/A pairs");
                ckpt.adapter->entries.back().A = m.values[i];
            }
        } else {
            ckpt.params.entries.push_back({a.name, m.values[i], a.trainable});
        }
    }
    return ckpt;
}

void save_inversion(const std::string& path, const InversionResult& inv) {
    Manifest m;
    m.meta["kind"] = "inversion";
    m.meta["method"] = inv.method;
    m.meta["w"] = fmt(inv.null_schedule.w);
    m.meta["num_steps"] = std::to_string(inv.num_steps);
    m.meta["lr_halvings"] = std::to_string(inv.lr_halvings);

    auto push_vec = [&](const std::string& name, const Vec& v) {
        m.arrays.push_back({name, v.size(), 1, false});
        m.values.push_back(v);
    };
    push_vec("x_T", inv.x_T);
    push_vec("source", inv.source);
    push_vec("cond", inv.cond);
    Mat nulls(inv.null_schedule.nulls.empty() ? 0 : inv.null_schedule.nulls[0].size(),
              static_cast<long>(inv.null_schedule.nulls.size()));
    for (std::size_t k = 0; k < inv.null_schedule.nulls.size(); ++k)
        nulls.col(static_cast<long>(k)) = inv.null_schedule.nulls[k];
    m.arrays.push_back({"nulls", nulls.rows(), nulls.cols(), false});
    m.values.push_back(nulls);
    Vec resid(static_cast<long>(inv.residuals.size()));
    for (std::size_t i = 0; i < inv.residuals.size(); ++i) resid[static_cast<long>(i)] = inv.residuals[i];
    push_vec("residuals", resid);
    write_manifest(path, m);
}

InversionResult load_inversion(const std::string& path) {
    Manifest m = read_manifest(path);
    if (meta_at(m, "kind") != "inversion")
        throw std::runtime_error(path + ": manifest is not an inversion record");
    InversionResult inv;
    inv.method = meta_at(m, "method");
    inv.null_schedule.w = std::stod(meta_at(m, "w"));
    inv.num_steps = std::stoi(meta_at(m, "num_steps"));
    inv.lr_halvings = std::stoi(meta_at(m, "lr_halvings"));
    auto find = [&](const std::string& name) -> const Mat& {
        for (std::size_t i = 0; i < m.arrays.size(); ++i)
            if (m.arrays[i].name == name) return m.values[i];
        throw std::runtime_error(path + ": missing array " + name);
    };
    inv.x_T = find("x_T").col(0);
    inv.source = find("source").col(0);
    inv.cond = find("cond").col(0);
    const Mat& nulls = find("nulls");
    for (long k = 0; k < nulls.cols(); ++k) inv.null_schedule.nulls.push_back(nulls.col(k));
    const Mat& resid = find("residuals");
    for (long i = 0; i < resid.rows(); ++i) inv.residuals.push_back(resid(i, 0));
    return inv;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "iteration,base_loss,reg_loss,ema_a,wall_time\n" << std::setprecision(12);
    for (const auto& r : rows)
        os << r.iteration << "," << r.base_loss << "," << r.reg_loss << "," << r.ema_a << ","
           << r.wall_time << "\n";
}

void write_vectors_csv(const std::string& path, const std::vector<Vec>& rows) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    const long dim = rows.empty() ? 0 : rows[0].size();
    os << "step";
    for (long d = 0; d < dim; ++d) os << ",v" << d;
    os << "\n" << std::setprecision(12);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        os << i;
        for (long d = 0; d < rows[i].size(); ++d) os << "," << rows[i][d];
        os << "\n";
    }
}

void write_series_csv(const std::string& path, const std::string& value_name,
                      const std::vector<double>& values) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "index," << value_name << "\n" << std::setprecision(12);
    for (std::size_t i = 0; i < values.size(); ++i) os << i << "," << values[i] << "\n";
}

void write_pgm(const std::string& path, const Vec& image, int side) {
    if (image.size() != static_cast<long>(side) * side)
        throw std::invalid_argument("write_pgm: image size does not match side^2");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "P5\n" << side << " " << side << "\n255\n";
    for (long i = 0; i < image.size(); ++i) {
        const double v = std::clamp(image[i], 0.0, 1.0);
        const unsigned char b = static_cast<unsigned char>(std::lround(v * 255.0));
        os.write(reinterpret_cast<const char*>(&b), 1);
    }
}

std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << content;
}

}  // namespace difflab
