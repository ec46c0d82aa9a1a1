#include "gsa/mlp.hpp"

#include <cmath>

#include "gsa/parallel.hpp"

namespace gsa {

namespace {
constexpr size_t kRowChunk = 256;

// out = A * W^T (+ bias), rows processed in fixed chunks.
void linear_rows(const MatXr& a, const MatXr& w, const VecX* bias, MatXr& out) {
    out.resize(a.rows(), w.rows());
    parallel_chunks(static_cast<size_t>(a.rows()), kRowChunk, [&](size_t b, size_t e, size_t) {
        auto len = static_cast<Eigen::Index>(e - b);
        auto bi = static_cast<Eigen::Index>(b);
        out.middleRows(bi, len).noalias() = a.middleRows(bi, len) * w.transpose();
        if (bias) out.middleRows(bi, len).rowwise() += bias->transpose();
    });
}

// Returns A^T * B via per-chunk partials reduced in chunk order.
MatXr gemm_at_b(const MatXr& a, const MatXr& b_mat) {
    size_t n_chunks = chunk_count(static_cast<size_t>(a.rows()), kRowChunk);
    std::vector<MatXr> partial(n_chunks);
    parallel_chunks(static_cast<size_t>(a.rows()), kRowChunk, [&](size_t b, size_t e, size_t c) {
        auto len = static_cast<Eigen::Index>(e - b);
        auto bi = static_cast<Eigen::Index>(b);
        partial[c].noalias() = a.middleRows(bi, len).transpose() * b_mat.middleRows(bi, len);
    });
    MatXr out = MatXr::Zero(a.cols(), b_mat.cols());
    for (auto& p : partial) out += p;
    return out;
}
}  // namespace

int posenc_dim(int n_freq) { return 3 + 6 * n_freq; }

void posenc(const Vec3& p, int n_freq, double* out) {
    out[0] = p.x();
    out[1] = p.y();
    out[2] = p.z();
    int o = 3;
    double f = 1.0;
    for (int l = 0; l < n_freq; ++l, f *= 2.0) {
        for (int c = 0; c < 3; ++c) out[o++] = std::sin(f * p[c]);
        for (int c = 0; c < 3; ++c) out[o++] = std::cos(f * p[c]);
    }
}

void posenc_backward(const Vec3& p, int n_freq, const double* d_out, Vec3& d_p) {
    for (int c = 0; c < 3; ++c) d_p[c] += d_out[c];
    int o = 3;
    double f = 1.0;
    for (int l = 0; l < n_freq; ++l, f *= 2.0) {
        for (int c = 0; c < 3; ++c) d_p[c] += d_out[o + c] * f * std::cos(f * p[c]);
        for (int c = 0; c < 3; ++c) d_p[c] -= d_out[o + 3 + c] * f * std::sin(f * p[c]);
        o += 6;
    }
}

void NonRigidMlp::init(Rng& rng) {
    require(skip_layer > 0 && skip_layer < depth, "NonRigidMlp: skip layer out of range");
    int in = input_dim();
    weights.resize(depth);
    biases.resize(depth);
    for (int l = 0; l < depth; ++l) {
        int fan_in = l == 0 ? in : (l == skip_layer ? width + in : width);
        double std_dev = std::sqrt(2.0 / fan_in);
        weights[l].resize(width, fan_in);
        for (Eigen::Index i = 0; i < weights[l].size(); ++i)
            weights[l].data()[i] = std_dev * rng.normal();
        biases[l] = VecX::Zero(width);
    }
    head_dx_w = MatXr::Zero(3, width);
    head_dr_w = MatXr::Zero(4, width);
    head_ds_w = MatXr::Zero(3, width);
    head_dx_b = VecX::Zero(3);
    head_dr_b = VecX::Zero(4);
    head_ds_b = VecX::Zero(3);
}

NonRigidMlp::Output NonRigidMlp::forward(const MatXr& input, Cache* cache) const {
    require(input.cols() == input_dim(), "NonRigidMlp: input width mismatch");
    Eigen::Index n = input.rows();
    std::vector<MatXr> hidden(depth);
    MatXr z;
    for (int l = 0; l < depth; ++l) {
        if (l == 0) {
            linear_rows(input, weights[l], &biases[l], z);
        } else if (l == skip_layer) {
            int in = input_dim();
            linear_rows(hidden[l - 1], MatXr(weights[l].leftCols(width)), &biases[l], z);
            MatXr zx;
            linear_rows(input, MatXr(weights[l].rightCols(in)), nullptr, zx);
            z += zx;
        } else {
            linear_rows(hidden[l - 1], weights[l], &biases[l], z);
        }
        hidden[l] = z.cwiseMax(0.0);
    }
    Output out;
    MatXr tmp;
    linear_rows(hidden[depth - 1], head_dx_w, &head_dx_b, tmp);
    out.dx = tmp;
    linear_rows(hidden[depth - 1], head_dr_w, &head_dr_b, tmp);
    out.dr = tmp;
    linear_rows(hidden[depth - 1], head_ds_w, &head_ds_b, tmp);
    out.ds = tmp;
    if (cache) {
        cache->input = input;
        cache->hidden = std::move(hidden);
    }
    (void)n;
    return out;
}

void NonRigidMlp::Grads::setZero(const NonRigidMlp& mlp) {
    weights.resize(mlp.depth);
    biases.resize(mlp.depth);
    for (int l = 0; l < mlp.depth; ++l) {
        weights[l] = MatXr::Zero(mlp.weights[l].rows(), mlp.weights[l].cols());
        biases[l] = VecX::Zero(mlp.width);
    }
    head_dx_w = MatXr::Zero(3, mlp.width);
    head_dr_w = MatXr::Zero(4, mlp.width);
    head_ds_w = MatXr::Zero(3, mlp.width);
    head_dx_b = VecX::Zero(3);
    head_dr_b = VecX::Zero(4);
    head_ds_b = VecX::Zero(3);
}

void NonRigidMlp::Grads::accumulate(const Grads& other) {
    for (size_t l = 0; l < weights.size(); ++l) {
        weights[l] += other.weights[l];
        biases[l] += other.biases[l];
    }
    head_dx_w += other.head_dx_w;
    head_dr_w += other.head_dr_w;
    head_ds_w += other.head_ds_w;
    head_dx_b += other.head_dx_b;
    head_dr_b += other.head_dr_b;
    head_ds_b += other.head_ds_b;
}

MatXr NonRigidMlp::backward(const Cache& cache, const MatX3& d_dx, const MatX4& d_dr,
                            const MatX3& d_ds, Grads& grads) const {
    const MatXr& h_last = cache.hidden[depth - 1];
    MatXr d_dx_m = d_dx, d_dr_m = d_dr, d_ds_m = d_ds;

    grads.head_dx_w += gemm_at_b(d_dx_m, h_last);
    grads.head_dr_w += gemm_at_b(d_dr_m, h_last);
    grads.head_ds_w += gemm_at_b(d_ds_m, h_last);
    grads.head_dx_b += d_dx_m.colwise().sum();
    grads.head_dr_b += d_dr_m.colwise().sum();
    grads.head_ds_b += d_ds_m.colwise().sum();

    MatXr d_h;
    linear_rows(d_dx_m, MatXr(head_dx_w.transpose()), nullptr, d_h);
    MatXr tmp;
    linear_rows(d_dr_m, MatXr(head_dr_w.transpose()), nullptr, tmp);
    d_h += tmp;
    linear_rows(d_ds_m, MatXr(head_ds_w.transpose()), nullptr, tmp);
    d_h += tmp;

    MatXr d_input = MatXr::Zero(cache.input.rows(), cache.input.cols());
    for (int l = depth - 1; l >= 0; --l) {
        // ReLU mask from the stored activations
        MatXr d_z = (cache.hidden[l].array() > 0.0).select(d_h, 0.0);
        grads.biases[l] += d_z.colwise().sum();
        if (l == 0) {
            grads.weights[l] += gemm_at_b(d_z, cache.input);
            linear_rows(d_z, MatXr(weights[l].transpose()), nullptr, tmp);
            d_input += tmp;
        } else if (l == skip_layer) {
            int in = input_dim();
            grads.weights[l].leftCols(width) += gemm_at_b(d_z, cache.hidden[l - 1]);
            grads.weights[l].rightCols(in) += gemm_at_b(d_z, cache.input);
            linear_rows(d_z, MatXr(weights[l].leftCols(width).transpose()), nullptr, d_h);
            linear_rows(d_z, MatXr(weights[l].rightCols(in).transpose()), nullptr, tmp);
            d_input += tmp;
        } else {
            grads.weights[l] += gemm_at_b(d_z, cache.hidden[l - 1]);
            linear_rows(d_z, MatXr(weights[l].transpose()), nullptr, d_h);
        }
    }
    return d_input;
}

Eigen::Index NonRigidMlp::parameter_count() const {
    Eigen::Index n = 0;
    for (int l = 0; l < depth; ++l) n += weights[l].size() + biases[l].size();
    n += head_dx_w.size() + head_dr_w.size() + head_ds_w.size();
    n += head_dx_b.size() + head_dr_b.size() + head_ds_b.size();
    return n;
}

namespace {
template <typename F>
void for_each_tensor(const NonRigidMlp& mlp, F&& fn) {
    for (int l = 0; l < mlp.depth; ++l) {
        fn(mlp.weights[l]);
        fn(mlp.biases[l]);
    }
    fn(mlp.head_dx_w);
    fn(mlp.head_dx_b);
    fn(mlp.head_dr_w);
    fn(mlp.head_dr_b);
    fn(mlp.head_ds_w);
    fn(mlp.head_ds_b);
}
}  // namespace

void NonRigidMlp::to_flat(VecX& out) const {
    out.resize(parameter_count());
    Eigen::Index o = 0;
    for_each_tensor(*this, [&](const auto& t) {
        out.segment(o, t.size()) = Eigen::Map<const VecX>(t.data(), t.size());
        o += t.size();
    });
}

void NonRigidMlp::from_flat(const VecX& in) {
    require(in.size() == parameter_count(), "NonRigidMlp::from_flat: size mismatch");
    Eigen::Index o = 0;
    auto load = [&](auto& t) {
        Eigen::Map<VecX>(t.data(), t.size()) = in.segment(o, t.size());
        o += t.size();
    };
    for (int l = 0; l < depth; ++l) {
        load(weights[l]);
        load(biases[l]);
    }
    load(head_dx_w);
    load(head_dx_b);
    load(head_dr_w);
    load(head_dr_b);
    load(head_ds_w);
    load(head_ds_b);
}

void NonRigidMlp::grads_to_flat(const Grads& g, VecX& out) {
    Eigen::Index total = 0;
    auto count = [&](const auto& t) { total += t.size(); };
    for (size_t l = 0; l < g.weights.size(); ++l) {
        count(g.weights[l]);
        count(g.biases[l]);
    }
    count(g.head_dx_w);
    count(g.head_dx_b);
    count(g.head_dr_w);
    count(g.head_dr_b);
    count(g.head_ds_w);
    count(g.head_ds_b);
    out.resize(total);
    Eigen::Index o = 0;
    auto store = [&](const auto& t) {
        out.segment(o, t.size()) = Eigen::Map<const VecX>(t.data(), t.size());
        o += t.size();
    };
    for (size_t l = 0; l < g.weights.size(); ++l) {
        store(g.weights[l]);
        store(g.biases[l]);
    }
    store(g.head_dx_w);
    store(g.head_dx_b);
    store(g.head_dr_w);
    store(g.head_dr_b);
    store(g.head_ds_w);
    store(g.head_ds_b);
}

}  // namespace gsa
