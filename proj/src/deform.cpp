#include "gsa/deform.hpp"

#include <cmath>

#include "gsa/parallel.hpp"

namespace gsa {

CanonicalBody build_canonical_body(const BodyModel& model) {
    FkResult fk = fk_forward(model, model.theta_canonical, Vec3::Zero());
    CanonicalBody canon;
    canon.t_c = vertex_transforms(model, fk);
    canon.t_c_inv.reserve(canon.t_c.size());
    for (const auto& t : canon.t_c) canon.t_c_inv.push_back(t.inverse());
    return canon;
}

VecX agent_weights(const Vec3& x, const Eigen::VectorXi& neighbor_row, int nearest,
                   const MatX3& canonical_vertices, const MatXr& skinning, double sigma) {
    int k = static_cast<int>(neighbor_row.size());
    VecX w(k);
    double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (int j = 0; j < k; ++j) {
        int v = neighbor_row[j];
        double u = (canonical_vertices.row(v).transpose() - x).norm();
        double kappa = (skinning.row(nearest) - skinning.row(v)).norm();
        w[j] = std::exp(-u * kappa * inv2s2);
    }
    double s = w.sum();
    require(s > 0.0, "agent_weights: degenerate weights");
    return w / s;
}

Affine rigid_blend(const VecX& weights, const Eigen::VectorXi& neighbor_row,
                   const std::vector<Affine>& t_c_inv, const std::vector<Affine>& t_t) {
    Affine d;
    d.A.setZero();
    d.b.setZero();
    for (int j = 0; j < weights.size(); ++j) {
        int v = neighbor_row[j];
        Affine m = t_c_inv[v].compose(t_t[v]);
        d.A += weights[j] * m.A;
        d.b += weights[j] * m.b;
    }
    return d;
}

Vec3 canonical_view_dir(const Vec3& d, const Mat3& cam_rot, const Transform& t_c2w,
                        const Quat& gaussian_rotation) {
    Vec3 d_cam = (t_c2w.R * cam_rot).transpose() * d;
    return quat_to_matrix(gaussian_rotation.normalized()).transpose() * d_cam;
}

Quat quat_from_orthonormal_raw(const Mat3& r) {
    double t = r.trace();
    Quat q;
    if (t > 0.0) {
        double s = std::sqrt(t + 1.0) * 2.0;
        q.w = 0.25 * s;
        q.x = (r(2, 1) - r(1, 2)) / s;
        q.y = (r(0, 2) - r(2, 0)) / s;
        q.z = (r(1, 0) - r(0, 1)) / s;
    } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
        double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
        q.w = (r(2, 1) - r(1, 2)) / s;
        q.x = 0.25 * s;
        q.y = (r(0, 1) + r(1, 0)) / s;
        q.z = (r(0, 2) + r(2, 0)) / s;
    } else if (r(1, 1) > r(2, 2)) {
        double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
        q.w = (r(0, 2) - r(2, 0)) / s;
        q.x = (r(0, 1) + r(1, 0)) / s;
        q.y = 0.25 * s;
        q.z = (r(1, 2) + r(2, 1)) / s;
    } else {
        double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
        q.w = (r(1, 0) - r(0, 1)) / s;
        q.x = (r(0, 2) + r(2, 0)) / s;
        q.y = (r(1, 2) + r(2, 1)) / s;
        q.z = 0.25 * s;
    }
    return q;
}

void quat_from_orthonormal_raw_backward(const Mat3& r, const Vec4& d_q, Mat3& d_r) {
    double t = r.trace();
    double dw = d_q[0], dx = d_q[1], dy = d_q[2], dz = d_q[3];
    if (t > 0.0) {
        double s = std::sqrt(t + 1.0) * 2.0;
        double ds = 0.25 * dw;
        ds -= (r(2, 1) - r(1, 2)) / (s * s) * dx;
        ds -= (r(0, 2) - r(2, 0)) / (s * s) * dy;
        ds -= (r(1, 0) - r(0, 1)) / (s * s) * dz;
        d_r(2, 1) += dx / s;
        d_r(1, 2) -= dx / s;
        d_r(0, 2) += dy / s;
        d_r(2, 0) -= dy / s;
        d_r(1, 0) += dz / s;
        d_r(0, 1) -= dz / s;
        double dt = ds * 2.0 / s;
        d_r(0, 0) += dt;
        d_r(1, 1) += dt;
        d_r(2, 2) += dt;
    } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
        double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
        double ds = 0.25 * dx;
        ds -= (r(2, 1) - r(1, 2)) / (s * s) * dw;
        ds -= (r(0, 1) + r(1, 0)) / (s * s) * dy;
        ds -= (r(0, 2) + r(2, 0)) / (s * s) * dz;
        d_r(2, 1) += dw / s;
        d_r(1, 2) -= dw / s;
        d_r(0, 1) += dy / s;
        d_r(1, 0) += dy / s;
        d_r(0, 2) += dz / s;
        d_r(2, 0) += dz / s;
        double da = ds * 2.0 / s;
        d_r(0, 0) += da;
        d_r(1, 1) -= da;
        d_r(2, 2) -= da;
    } else if (r(1, 1) > r(2, 2)) {
        double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
        double ds = 0.25 * dy;
        ds -= (r(0, 2) - r(2, 0)) / (s * s) * dw;
        ds -= (r(0, 1) + r(1, 0)) / (s * s) * dx;
        ds -= (r(1, 2) + r(2, 1)) / (s * s) * dz;
        d_r(0, 2) += dw / s;
        d_r(2, 0) -= dw / s;
        d_r(0, 1) += dx / s;
        d_r(1, 0) += dx / s;
        d_r(1, 2) += dz / s;
        d_r(2, 1) += dz / s;
        double da = ds * 2.0 / s;
        d_r(1, 1) += da;
        d_r(0, 0) -= da;
        d_r(2, 2) -= da;
    } else {
        double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
        double ds = 0.25 * dz;
        ds -= (r(1, 0) - r(0, 1)) / (s * s) * dw;
        ds -= (r(0, 2) + r(2, 0)) / (s * s) * dx;
        ds -= (r(1, 2) + r(2, 1)) / (s * s) * dy;
        d_r(1, 0) += dw / s;
        d_r(0, 1) -= dw / s;
        d_r(0, 2) += dx / s;
        d_r(2, 0) += dx / s;
        d_r(1, 2) += dy / s;
        d_r(2, 1) += dy / s;
        double da = ds * 2.0 / s;
        d_r(2, 2) += da;
        d_r(0, 0) -= da;
        d_r(1, 1) -= da;
    }
}


namespace {

Quat row_quat(const MatX4& m, Eigen::Index i) { return {m(i, 0), m(i, 1), m(i, 2), m(i, 3)}; }

MatXr build_mlp_input(const GaussianCloud& cloud, const Binding& binding, const MatX3& v_posed,
                      int n_freq) {
    Eigen::Index n = cloud.size();
    int pd = posenc_dim(n_freq);
    MatXr input(n, 2 * pd);
    parallel_chunks(static_cast<size_t>(n), 512, [&](size_t b, size_t e, size_t) {
        for (size_t i = b; i < e; ++i) {
            auto ii = static_cast<Eigen::Index>(i);
            posenc(cloud.positions.row(ii), n_freq, input.row(ii).data());
            posenc(v_posed.row(binding.nearest[ii]), n_freq, input.row(ii).data() + pd);
        }
    });
    return input;
}

}  // namespace

DeformResult deform(const DeformParams& p, DeformCache* cache) {
    const GaussianCloud& cloud = *p.cloud;
    const Binding& binding = *p.binding;
    const BodyModel& model = *p.model;
    Eigen::Index n = cloud.size();
    int k = binding.k();
    require(binding.size() == n, "deform: binding size mismatch");

    DeformCache local;
    DeformCache& c = cache ? *cache : local;

    c.v_shaped = shaped_template(model, *p.beta);
    c.fk_t = fk_forward(model, *p.theta_t, p.translation);
    c.t_t = vertex_transforms(model, c.fk_t);
    c.v_posed = posed_vertices(model, c.t_t, c.v_shaped);
    c.v_canon = posed_vertices(model, p.canon->t_c, c.v_shaped);
    Eigen::Index v_count = model.vertex_count();
    c.m_vert.resize(v_count);
    for (Eigen::Index v = 0; v < v_count; ++v) c.m_vert[v] = p.canon->t_c_inv[v].compose(c.t_t[v]);

    DeformResult res;
    res.s_nr = cloud.log_scales;
    res.x_nr = cloud.positions;
    c.has_mlp = p.mlp != nullptr;

    NonRigidMlp::Output delta;
    if (p.mlp) {
        c.mlp_input = build_mlp_input(cloud, binding, c.v_posed, p.mlp->n_freq);
        delta = p.mlp->forward(c.mlp_input, &c.mlp_cache);
        res.x_nr += delta.dx;
        res.s_nr += delta.ds;
    } else {
        delta.dr = MatX4::Zero(n, 4);
    }

    res.r_nr.resize(n, 4);
    c.r_nr_raw = cloud.rotations + delta.dr;
    c.r_nr_norm.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double nn = c.r_nr_raw.row(i).norm();
        c.r_nr_norm[i] = nn;
        res.r_nr.row(i) = c.r_nr_raw.row(i) / nn;
    }

    c.u_dist.resize(n, k);
    c.kappa.resize(n, k);
    c.w_raw.resize(n, k);
    c.w_sum.resize(n);
    res.blended.resize(n);
    res.x_obs.resize(n, 3);
    res.q_obs.resize(n, 4);
    c.q_pol.resize(n, 4);
    c.q_obs_raw.resize(n, 4);
    c.q_obs_norm.resize(n);
    c.polar_u.resize(n);
    c.polar_u_inv.resize(n);

    double inv2s2 = 1.0 / (2.0 * binding.sigma * binding.sigma);
    parallel_chunks(static_cast<size_t>(n), 256, [&](size_t lo, size_t hi, size_t) {
        for (size_t ii = lo; ii < hi; ++ii) {
            auto i = static_cast<Eigen::Index>(ii);
            Vec3 x_bar = cloud.positions.row(i);
            int nn_idx = binding.nearest[i];

            double wsum = 0.0;
            for (int j = 0; j < k; ++j) {
                int v = binding.neighbors(i, j);
                double u = (c.v_canon.row(v).transpose() - x_bar).norm();
                double kap = (model.skinning.row(nn_idx) - model.skinning.row(v)).norm();
                double w = std::exp(-u * kap * inv2s2);
                c.u_dist(i, j) = u;
                c.kappa(i, j) = kap;
                c.w_raw(i, j) = w;
                wsum += w;
            }
            c.w_sum[i] = wsum;

            Affine d;
            d.A.setZero();
            d.b.setZero();
            for (int j = 0; j < k; ++j) {
                int v = binding.neighbors(i, j);
                double wn = c.w_raw(i, j) / wsum;
                d.A += wn * c.m_vert[v].A;
                d.b += wn * c.m_vert[v].b;
            }
            res.blended[i] = d;

            res.x_obs.row(i) = d.apply(res.x_nr.row(i)).transpose();

            // polar factor via fixed Newton iterations, then quaternion
            c.polar_u[i][0] = d.A;
            for (int it = 0; it < kPolarIters; ++it) {
                Mat3 inv = c.polar_u[i][it].inverse();
                c.polar_u_inv[i][it] = inv;
                c.polar_u[i][it + 1] = 0.5 * (c.polar_u[i][it] + inv.transpose());
            }
            Quat q_pol = quat_from_orthonormal_raw(c.polar_u[i][kPolarIters]);
            c.q_pol.row(i) = q_pol.coeffs().transpose();
            Quat q_raw = quat_mul(q_pol, row_quat(res.r_nr, i));
            c.q_obs_raw.row(i) = q_raw.coeffs().transpose();
            double qn = q_raw.norm();
            c.q_obs_norm[i] = qn;
            res.q_obs.row(i) = c.q_obs_raw.row(i) / qn;
        }
    });
    return res;
}

DeformGrads deform_backward(const DeformParams& p, const DeformResult& res, const DeformCache& c,
                            const MatX3& d_x_obs, const MatX4& d_q_obs, const MatX3& d_s_nr) {
    const GaussianCloud& cloud = *p.cloud;
    const Binding& binding = *p.binding;
    const BodyModel& model = *p.model;
    Eigen::Index n = cloud.size();
    int k = binding.k();
    Eigen::Index v_count = model.vertex_count();

    DeformGrads g;
    g.d_positions.setZero(n, 3);
    g.d_rotations.setZero(n, 4);
    g.d_log_scales = d_s_nr;  // s_nr = log_scales + ds

    MatX3 d_x_nr = MatX3::Zero(n, 3);
    MatX4 d_r_nr_raw = MatX4::Zero(n, 4);
    MatX3 d_delta_x, d_delta_s;
    MatX4 d_delta_r;
    if (c.has_mlp) {
        d_delta_x.setZero(n, 3);
        d_delta_r.setZero(n, 4);
        d_delta_s = d_s_nr;
    }

    // Per-vertex accumulators (scattered sequentially for determinism).
    MatXr d_m_vert = MatXr::Zero(v_count, 12);   // gradient on M_v = [A|b]
    MatX3 d_v_canon = MatX3::Zero(v_count, 3);
    MatX3 d_v_posed = MatX3::Zero(v_count, 3);

    double inv2s2 = 1.0 / (2.0 * binding.sigma * binding.sigma);

    for (Eigen::Index i = 0; i < n; ++i) {
        // normalize(q_obs_raw)
        Quat q_obs{res.q_obs(i, 0), res.q_obs(i, 1), res.q_obs(i, 2), res.q_obs(i, 3)};
        Vec4 dq_raw = normalize_backward(q_obs, c.q_obs_norm[i], d_q_obs.row(i).transpose());

        // q_obs_raw = q_pol * r_nr
        Quat q_pol = row_quat(c.q_pol, i);
        Quat r_nr = row_quat(res.r_nr, i);
        Vec4 dq_pol = Vec4::Zero(), dr_nr_unit = Vec4::Zero();
        quat_mul_backward(q_pol, r_nr, dq_raw, dq_pol, dr_nr_unit);

        // r_nr = normalize(r_nr_raw)
        d_r_nr_raw.row(i) += normalize_backward(r_nr, c.r_nr_norm[i], dr_nr_unit).transpose();

        // q_pol = shepperd(U_last)
        Mat3 d_u = Mat3::Zero();
        quat_from_orthonormal_raw_backward(c.polar_u[i][kPolarIters], dq_pol, d_u);

        // Newton iterations U_{t+1} = (U_t + U_t^-T)/2
        for (int it = kPolarIters - 1; it >= 0; --it) {
            const Mat3& inv = c.polar_u_inv[i][it];
            Mat3 d_prev = 0.5 * d_u - 0.5 * (inv.transpose() * d_u.transpose() * inv.transpose());
            d_u = d_prev;
        }
        Mat3 d_da = d_u;  // gradient on D.A from the rotation path
        Vec3 d_db = Vec3::Zero();

        // x_obs = D.A x_nr + D.b
        Vec3 dxo = d_x_obs.row(i);
        Vec3 x_nr_i = res.x_nr.row(i);
        d_da += dxo * x_nr_i.transpose();
        d_db += dxo;
        d_x_nr.row(i) += (res.blended[i].A.transpose() * dxo).transpose();

        // D = sum_j w_hat_j M_j
        double wsum = c.w_sum[i];
        VecX d_w_hat(k);
        for (int j = 0; j < k; ++j) {
            int v = binding.neighbors(i, j);
            const Affine& m = c.m_vert[v];
            d_w_hat[j] = (m.A.array() * d_da.array()).sum() + m.b.dot(d_db);
            double w_hat = c.w_raw(i, j) / wsum;
            for (int r = 0; r < 3; ++r) {
                for (int cc = 0; cc < 3; ++cc) d_m_vert(v, r * 4 + cc) += w_hat * d_da(r, cc);
                d_m_vert(v, r * 4 + 3) += w_hat * d_db[r];
            }
        }
        // w_hat = w / sum(w)
        double dot = 0.0;
        for (int j = 0; j < k; ++j) dot += d_w_hat[j] * c.w_raw(i, j) / wsum;
        Vec3 x_bar = cloud.positions.row(i);
        for (int j = 0; j < k; ++j) {
            double dw = (d_w_hat[j] - dot) / wsum;
            double du = -c.w_raw(i, j) * c.kappa(i, j) * inv2s2 * dw;
            double u = c.u_dist(i, j);
            if (u > 1e-12) {
                int v = binding.neighbors(i, j);
                Vec3 dir = (x_bar - c.v_canon.row(v).transpose()) / u;
                g.d_positions.row(i) += (du * dir).transpose();
                d_v_canon.row(v) -= (du * dir).transpose();
            }
        }

        // x_nr = positions + dx
        g.d_positions.row(i) += d_x_nr.row(i);
        // r_nr_raw = rotations + dr
        g.d_rotations.row(i) += d_r_nr_raw.row(i);
        if (c.has_mlp) {
            d_delta_x.row(i) = d_x_nr.row(i);
            d_delta_r.row(i) = d_r_nr_raw.row(i);
        }
    }

    // MLP backward and input gradients
    if (c.has_mlp) {
        g.has_mlp = true;
        g.d_mlp.setZero(*p.mlp);
        MatXr d_input = p.mlp->backward(c.mlp_cache, d_delta_x, d_delta_r, d_delta_s, g.d_mlp);
        int pd = posenc_dim(p.mlp->n_freq);
        for (Eigen::Index i = 0; i < n; ++i) {
            Vec3 dp = Vec3::Zero();
            posenc_backward(cloud.positions.row(i), p.mlp->n_freq, d_input.row(i).data(), dp);
            g.d_positions.row(i) += dp.transpose();
            Vec3 dv = Vec3::Zero();
            int nn_idx = binding.nearest[i];
            posenc_backward(c.v_posed.row(nn_idx), p.mlp->n_freq, d_input.row(i).data() + pd, dv);
            d_v_posed.row(nn_idx) += dv.transpose();
        }
    }

    // Vertex-level chains.
    MatXr d_t_t = MatXr::Zero(v_count, 12);
    MatX3 d_v_shaped = MatX3::Zero(v_count, 3);
    for (Eigen::Index v = 0; v < v_count; ++v) {
        // M_v = C_v ∘ T_v with C_v = T_c^-1 constant:
        // M.A = C.A T.A, M.b = C.A T.b + C.b
        const Mat3& ca = p.canon->t_c_inv[v].A;
        Mat3 dma;
        Vec3 dmb;
        for (int r = 0; r < 3; ++r) {
            for (int cc = 0; cc < 3; ++cc) dma(r, cc) = d_m_vert(v, r * 4 + cc);
            dmb[r] = d_m_vert(v, r * 4 + 3);
        }
        Mat3 dta = ca.transpose() * dma;
        Vec3 dtb = ca.transpose() * dmb;

        // v_posed = T.A v_shaped + T.b
        Vec3 dvp = d_v_posed.row(v);
        dta += dvp * c.v_shaped.row(v);
        dtb += dvp;
        d_v_shaped.row(v) += (c.t_t[v].A.transpose() * dvp).transpose();

        // v_canon = T_c.A v_shaped + T_c.b (constant transform)
        Vec3 dvc = d_v_canon.row(v);
        d_v_shaped.row(v) += (p.canon->t_c[v].A.transpose() * dvc).transpose();

        for (int r = 0; r < 3; ++r) {
            for (int cc = 0; cc < 3; ++cc) d_t_t(v, r * 4 + cc) = dta(r, cc);
            d_t_t(v, r * 4 + 3) = dtb[r];
        }
    }

    g.d_beta = shaped_template_backward(model, d_v_shaped);

    std::vector<Mat4> d_rel = vertex_transforms_backward(model, d_t_t);
    FkGrads fg = fk_backward(model, c.fk_t, d_rel);
    g.d_theta = fg.d_theta;
    g.d_translation = fg.d_translation;
    return g;
}

}  // namespace gsa
