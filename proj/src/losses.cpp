#include "gsa/losses.hpp"

#include <algorithm>
#include <cmath>

#include "gsa/parallel.hpp"
#include "gsa/quat.hpp"

namespace gsa {

double l1_loss(const Image& rendered, const Image& target, Image* d_rendered) {
    require(rendered.same_shape(target), "l1_loss: shape mismatch");
    size_t count = rendered.value_count();
    double sum = 0.0;
    if (d_rendered) *d_rendered = Image(rendered.width, rendered.height);
    for (size_t i = 0; i < count; ++i) {
        double d = rendered.data[i] - target.data[i];
        sum += std::abs(d);
        if (d_rendered) d_rendered->data[i] = d > 0.0 ? 1.0 / count : (d < 0.0 ? -1.0 / count : 0.0);
    }
    return sum / count;
}

namespace {

constexpr int kWin = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWin>& ssim_kernel() {
    static const std::array<double, kWin> k = [] {
        std::array<double, kWin> w{};
        double sum = 0.0;
        for (int i = 0; i < kWin; ++i) {
            double d = i - kWin / 2;
            w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
            sum += w[i];
        }
        for (auto& v : w) v /= sum;
        return w;
    }();
    return k;
}

using Plane = std::vector<double>;

// Same-size zero-padded separable filtering; self-adjoint for the symmetric
// kernel, so the backward pass reuses it.
void filter_same(const Plane& in, int w, int h, Plane& out) {
    const auto& k = ssim_kernel();
    int r = kWin / 2;
    Plane tmp(in.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int t = -r; t <= r; ++t) {
                int xx = x + t;
                if (xx < 0 || xx >= w) continue;
                acc += k[t + r] * in[static_cast<size_t>(y) * w + xx];
            }
            tmp[static_cast<size_t>(y) * w + x] = acc;
        }
    }
    out.resize(in.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int t = -r; t <= r; ++t) {
                int yy = y + t;
                if (yy < 0 || yy >= h) continue;
                acc += k[t + r] * tmp[static_cast<size_t>(yy) * w + x];
            }
            out[static_cast<size_t>(y) * w + x] = acc;
        }
    }
}

void extract_plane(const Image& img, int c, Plane& out) {
    out.resize(img.pixel_count());
    for (size_t p = 0; p < out.size(); ++p) out[p] = img.data[p * 3 + c];
}

}  // namespace

double ssim_loss(const Image& rendered, const Image& target, Image* d_rendered) {
    require(rendered.same_shape(target), "ssim_loss: shape mismatch");
    int w = rendered.width, h = rendered.height;
    size_t np = rendered.pixel_count();
    double total = 0.0;
    if (d_rendered) *d_rendered = Image(w, h);

    Plane x, y, mx, my, mxx, mxy, myy, tmp;
    for (int c = 0; c < 3; ++c) {
        extract_plane(rendered, c, x);
        extract_plane(target, c, y);
        filter_same(x, w, h, mx);
        filter_same(y, w, h, my);
        tmp.resize(np);
        for (size_t p = 0; p < np; ++p) tmp[p] = x[p] * x[p];
        filter_same(tmp, w, h, mxx);
        for (size_t p = 0; p < np; ++p) tmp[p] = x[p] * y[p];
        filter_same(tmp, w, h, mxy);
        for (size_t p = 0; p < np; ++p) tmp[p] = y[p] * y[p];
        filter_same(tmp, w, h, myy);

        Plane d_mx(np, 0.0), d_mxx(np, 0.0), d_mxy(np, 0.0);
        for (size_t p = 0; p < np; ++p) {
            double mux = mx[p], muy = my[p];
            double sxx = mxx[p] - mux * mux;
            double syy = myy[p] - muy * muy;
            double sxy = mxy[p] - mux * muy;
            double a1 = 2.0 * mux * muy + kC1;
            double a2 = 2.0 * sxy + kC2;
            double b1 = mux * mux + muy * muy + kC1;
            double b2 = sxx + syy + kC2;
            double s = (a1 * a2) / (b1 * b2);
            total += s;
            if (!d_rendered) continue;
            double ds = -1.0 / (3.0 * static_cast<double>(np));  // d(loss)/d(ssim_p)
            double da1 = ds * a2 / (b1 * b2);
            double da2 = ds * a1 / (b1 * b2);
            double db1 = -ds * s / b1;
            double db2 = -ds * s / b2;
            double d_sxx = db2;
            double d_sxy = 2.0 * da2;
            d_mx[p] = da1 * 2.0 * muy + db1 * 2.0 * mux - d_sxx * 2.0 * mux - d_sxy * muy;
            d_mxx[p] = d_sxx;
            d_mxy[p] = d_sxy;
        }
        if (d_rendered) {
            Plane f_mx, f_mxx, f_mxy;
            filter_same(d_mx, w, h, f_mx);
            filter_same(d_mxx, w, h, f_mxx);
            filter_same(d_mxy, w, h, f_mxy);
            for (size_t p = 0; p < np; ++p)
                d_rendered->data[p * 3 + c] += f_mx[p] + f_mxx[p] * 2.0 * x[p] + f_mxy[p] * y[p];
        }
    }
    return 1.0 - total / (3.0 * static_cast<double>(np));
}

double ssim_metric(const Image& a, const Image& b) { return 1.0 - ssim_loss(a, b, nullptr); }

double psnr(const Image& a, const Image& b) {
    require(a.same_shape(b), "psnr: shape mismatch");
    double mse = 0.0;
    for (size_t i = 0; i < a.value_count(); ++i) {
        double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= a.value_count();
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

RigidPriorGraph build_rigid_prior_graph(const MatX3& pos, int k, double lambda_w) {
    Eigen::Index n = pos.rows();
    RigidPriorGraph g;
    g.lambda_w = lambda_w;
    g.neighbors.setConstant(n, k, -1);
    g.weights.setZero(n, k);
    parallel_chunks(static_cast<size_t>(n), 128, [&](size_t lo, size_t hi, size_t) {
        std::vector<std::pair<double, int>> dist(static_cast<size_t>(n));
        for (size_t ii = lo; ii < hi; ++ii) {
            auto i = static_cast<Eigen::Index>(ii);
            Vec3 p = pos.row(i);
            size_t m = 0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i) continue;
                dist[m++] = {(pos.row(j).transpose() - p).squaredNorm(), static_cast<int>(j)};
            }
            int kk = std::min<int>(k, static_cast<int>(m));
            std::partial_sort(dist.begin(), dist.begin() + kk, dist.begin() + static_cast<long>(m));
            for (int c = 0; c < kk; ++c) {
                g.neighbors(i, c) = dist[c].second;
                g.weights(i, c) = std::exp(-lambda_w * dist[c].first);
            }
        }
    });
    return g;
}

double rot_loss(const RigidPriorGraph& graph, const MatX4& q_canonical, const MatX4& q_observed,
                MatX4* d_q_canonical, MatX4* d_q_observed) {
    Eigen::Index n = graph.size();
    require(q_canonical.rows() == n && q_observed.rows() == n, "rot_loss: size mismatch");
    int k = graph.k();
    double norm = 1.0 / (static_cast<double>(k) * static_cast<double>(n));

    // relative rotations, sign-aligned to positive scalar part
    MatX4 rel(n, 4);
    std::vector<bool> flipped(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        Quat qo{q_observed(i, 0), q_observed(i, 1), q_observed(i, 2), q_observed(i, 3)};
        Quat qc{q_canonical(i, 0), q_canonical(i, 1), q_canonical(i, 2), q_canonical(i, 3)};
        Quat r = quat_mul(qo, qc.conjugate());
        bool flip = r.w < 0.0;
        flipped[static_cast<size_t>(i)] = flip;
        rel.row(i) = (flip ? Vec4(-r.w, -r.x, -r.y, -r.z) : r.coeffs()).transpose();
    }

    double loss = 0.0;
    MatX4 d_rel = MatX4::Zero(n, 4);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int c = 0; c < k; ++c) {
            int j = graph.neighbors(i, c);
            if (j < 0) continue;
            Vec4 diff = (rel.row(j) - rel.row(i)).transpose();
            double d = diff.norm();
            loss += graph.weights(i, c) * d;
            if (d_q_observed && d > 1e-12) {
                Vec4 u = diff * (graph.weights(i, c) * norm / d);
                d_rel.row(j) += u.transpose();
                d_rel.row(i) -= u.transpose();
            }
        }
    }

    if (d_q_observed) {
        for (Eigen::Index i = 0; i < n; ++i) {
            Vec4 dr = d_rel.row(i).transpose();
            if (flipped[static_cast<size_t>(i)]) dr = -dr;
            Quat qo{q_observed(i, 0), q_observed(i, 1), q_observed(i, 2), q_observed(i, 3)};
            Quat qc{q_canonical(i, 0), q_canonical(i, 1), q_canonical(i, 2), q_canonical(i, 3)};
            Vec4 d_qo = Vec4::Zero(), d_qc_conj = Vec4::Zero();
            quat_mul_backward(qo, qc.conjugate(), dr, d_qo, d_qc_conj);
            d_q_observed->row(i) += d_qo.transpose();
            if (d_q_canonical) {
                (*d_q_canonical)(i, 0) += d_qc_conj[0];
                (*d_q_canonical)(i, 1) -= d_qc_conj[1];
                (*d_q_canonical)(i, 2) -= d_qc_conj[2];
                (*d_q_canonical)(i, 3) -= d_qc_conj[3];
            }
        }
    }
    return loss * norm;
}

double iso_loss(const RigidPriorGraph& graph, const MatX3& x_canonical, const MatX3& x_observed,
                MatX3* d_x_canonical, MatX3* d_x_observed) {
    Eigen::Index n = graph.size();
    require(x_canonical.rows() == n && x_observed.rows() == n, "iso_loss: size mismatch");
    int k = graph.k();
    double norm = 1.0 / (static_cast<double>(k) * static_cast<double>(n));

    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int c = 0; c < k; ++c) {
            int j = graph.neighbors(i, c);
            if (j < 0) continue;
            Vec3 dc = x_canonical.row(i) - x_canonical.row(j);
            Vec3 dob = x_observed.row(i) - x_observed.row(j);
            double nc = dc.norm(), no = dob.norm();
            double diff = no - nc;
            loss += graph.weights(i, c) * std::abs(diff);
            if (!d_x_observed) continue;
            double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
            double wns = graph.weights(i, c) * norm * s;
            if (no > 1e-12) {
                Vec3 g = wns * dob / no;
                d_x_observed->row(i) += g.transpose();
                d_x_observed->row(j) -= g.transpose();
            }
            if (d_x_canonical && nc > 1e-12) {
                Vec3 g = -wns * dc / nc;
                d_x_canonical->row(i) += g.transpose();
                d_x_canonical->row(j) -= g.transpose();
            }
        }
    }
    return loss * norm;
}

}  // namespace gsa
