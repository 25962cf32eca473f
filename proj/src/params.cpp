#include "lgode/params.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include "binio.hpp"
#include "lgode/ops.hpp"

namespace lgode {

ParamSet::Handle ParamSet::add(std::string name, Tensor init) {
    for (const Param& p : params_)
        if (p.name == name) throw std::invalid_argument("duplicate parameter name " + name);
    Tensor g(init.shape());
    params_.push_back({std::move(name), std::move(init), std::move(g)});
    return params_.size() - 1;
}

ParamSet::Handle ParamSet::add_weight(std::string name, std::size_t fan_in, std::size_t fan_out,
                                      std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor w({fan_in, fan_out});
    for (double& v : w.values()) v = dist(rng);
    return add(std::move(name), std::move(w));
}

ParamSet::Handle ParamSet::add_bias(std::string name, std::size_t width) {
    return add(std::move(name), Tensor({1, width}));
}

ParamSet::Handle ParamSet::find(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (params_[i].name == name) return i;
    throw std::out_of_range("no parameter named " + name);
}

std::size_t ParamSet::scalar_count() const {
    std::size_t n = 0;
    for (const Param& p : params_) n += p.value.size();
    return n;
}

void ParamSet::zero_grad() {
    for (Param& p : params_) p.grad.fill(0.0);
}

double ParamSet::grad_norm() const {
    double s = 0.0;
    for (const Param& p : params_)
        for (double g : p.grad.values()) s += g * g;
    return std::sqrt(s);
}

void ParamSet::scale_grad(double s) {
    for (Param& p : params_)
        for (double& g : p.grad.values()) g *= s;
}

// Layout: magic[8] | u32 version | u32 count | count x record
// record: u32 name_len | name | u32 rank (=2) | u64 extents[rank] | f64 values[prod]
void ParamSet::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
    os.write(kCheckpointMagic, sizeof kCheckpointMagic);
    binio::put_u32(os, kCheckpointVersion);
    binio::put_u32(os, static_cast<std::uint32_t>(params_.size()));
    for (const Param& p : params_) {
        binio::put_bytes(os, p.name);
        binio::put_u32(os, 2);
        binio::put_u64(os, p.value.rows());
        binio::put_u64(os, p.value.cols());
        for (double v : p.value.values()) binio::put_f64(os, v);
    }
    if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw std::runtime_error(path.string() + " is not a checkpoint file");
    const std::uint32_t version = binio::get_u32(is);
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t count = binio::get_u32(is);
    std::vector<CheckpointRecord> out;
    for (std::uint32_t k = 0; k < count; ++k) {
        CheckpointRecord r;
        r.name = binio::get_bytes(is);
        const std::uint32_t rank = binio::get_u32(is);
        if (rank != 2) throw std::runtime_error("record " + r.name + ": unsupported rank " + std::to_string(rank));
        r.shape.rows = binio::get_u64(is);
        r.shape.cols = binio::get_u64(is);
        r.values.resize(r.shape.size());
        for (double& v : r.values) v = binio::get_f64(is);
        out.push_back(std::move(r));
    }
    return out;
}

void ParamSet::load(const std::filesystem::path& path) {
    const auto records = read_checkpoint(path);
    std::map<std::string, const CheckpointRecord*> by_name;
    for (const auto& r : records) by_name[r.name] = &r;
    std::string diff;
    for (const Param& p : params_) {
        auto it = by_name.find(p.name);
        if (it == by_name.end()) {
            diff += "  missing " + p.name + " (expected " + p.value.shape().str() + ")\n";
        } else if (!(it->second->shape == p.value.shape())) {
            diff += "  " + p.name + ": checkpoint " + it->second->shape.str() + ", model " + p.value.shape().str() + "\n";
        }
    }
    for (const auto& r : records) {
        bool known = false;
        for (const Param& p : params_) known = known || p.name == r.name;
        if (!known) diff += "  unexpected " + r.name + " " + r.shape.str() + "\n";
    }
    if (!diff.empty()) throw std::runtime_error("checkpoint does not match model config:\n" + diff);
    for (Param& p : params_) p.value = Tensor(p.value.shape(), by_name[p.name]->values);
}

Bound::Bound(ad::Tape& tape, const ParamSet& params) : tape_(&tape) {
    vars_.reserve(params.size());
    for (const Param& p : params.all()) vars_.push_back(tape.variable(p.value));
}

void Bound::accumulate_grads(ParamSet& params) const {
    for (std::size_t i = 0; i < vars_.size(); ++i) {
        const Tensor g = tape_->grad(vars_[i]);
        Tensor& dst = params[i].grad;
        for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
    }
}

Linear Linear::create(ParamSet& ps, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng,
                      bool bias) {
    Linear l;
    l.weight = ps.add_weight(name + ".weight", in, out, rng);
    l.has_bias = bias;
    if (bias) l.bias = ps.add_bias(name + ".bias", out);
    return l;
}

ad::Var Linear::operator()(const Bound& b, ad::Var x) const {
    ad::Var y = ad::matmul(x, b[weight]);
    return has_bias ? ad::add(y, b[bias]) : y;
}

Mlp Mlp::create(ParamSet& ps, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
                std::mt19937_64& rng) {
    return {Linear::create(ps, name + ".0", in, hidden, rng), Linear::create(ps, name + ".1", hidden, out, rng)};
}

ad::Var Mlp::operator()(const Bound& b, ad::Var x) const { return second(b, ad::relu(first(b, x))); }

}  // namespace lgode

namespace lgode {

std::vector<ParamGradCheck> param_grad_check(const ParamSet& ps, const std::function<ad::Var(const Bound&)>& loss,
                                             const ad::GradCheckOptions& opt) {
    std::vector<ParamGradCheck> out;
    for (std::size_t k = 0; k < ps.size(); ++k) {
        auto f = [&](ad::Tape& t, const std::vector<ad::Var>& in) {
            std::vector<ad::Var> vars;
            for (std::size_t i = 0; i < ps.size(); ++i) vars.push_back(i == k ? in[0] : t.constant(ps[i].value));
            return loss(Bound(t, std::move(vars)));
        };
        out.push_back({ps[k].name, ad::grad_check(f, {ps[k].value}, opt)});
    }
    return out;
}

double worst_error(const std::vector<ParamGradCheck>& checks) {
    double w = 0.0;
    for (const auto& c : checks) {
        if (!c.result.finite) return std::numeric_limits<double>::infinity();
        w = std::max(w, c.result.max_rel_error);
    }
    return w;
}

}  // namespace lgode
