#pragma once
// Diffusion waypoint policy: tanh-MLP encoder / denoiser / critic over one
// flat parameter vector, a DDPM schedule, training losses with hand-derived
// batched gradients, and an adaptive-moment optimizer. Eigen supplies the
// matrix arithmetic; every gradient here is checkable by finite differences.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "navloop/geometry.hpp"
#include "navloop/rng.hpp"
#include "navloop/sim.hpp"
#include "navloop/util.hpp"

namespace navloop {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct PolicyConfig {
  int rays = 64;
  int K = 24;
  int feat = 128;        // encoder output ("condition") width
  int enc_hidden = 128;
  int den_hidden = 256;  // three hidden layers of this width
  int temb = 32;         // sinusoidal timestep embedding, must be even
  int critic_emb = 64;   // trajectory embedding width
  int critic_hidden = 64;
  int N = 50;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  double traj_scale = 2.0;   // waypoint meters divided by this before diffusion
  double range_scale = 5.0;  // depth-ray normalization
  double goal_scale = 10.0;  // goal-distance normalization

  int obs_dim() const { return rays + 3; }  // rays + (dist, cos, sin)
  int act_dim() const { return 3 * K; }
  int den_in() const { return act_dim() + temb + feat; }

  bool operator==(const PolicyConfig&) const = default;
};

// Reduced sizes for the finite-difference gradient oracle; stays under
// 2000 parameters total.
inline PolicyConfig tiny_policy_config() {
  PolicyConfig cfg;
  cfg.rays = 6;
  cfg.K = 3;
  cfg.feat = 10;
  cfg.enc_hidden = 10;
  cfg.den_hidden = 14;
  cfg.temb = 8;
  cfg.critic_emb = 8;
  cfg.critic_hidden = 10;
  cfg.N = 5;
  return cfg;
}

struct DiffusionSchedule {
  VectorXd betas, alphas, alpha_bar;  // index i holds timestep k = i + 1

  static DiffusionSchedule make(int n, double beta_min, double beta_max) {
    if (n < 1) throw Error("schedule: N must be >= 1");
    if (!(beta_min > 0.0) || !(beta_max < 1.0) || beta_min > beta_max)
      throw Error("schedule: betas must satisfy 0 < beta_min <= beta_max < 1");
    DiffusionSchedule s;
    s.betas.resize(n);
    s.alphas.resize(n);
    s.alpha_bar.resize(n);
    double prod = 1.0;
    for (int i = 0; i < n; ++i) {
      s.betas[i] = n == 1 ? beta_min : beta_min + (beta_max - beta_min) * i / (n - 1);
      s.alphas[i] = 1.0 - s.betas[i];
      prod *= s.alphas[i];
      s.alpha_bar[i] = prod;
    }
    return s;
  }

  int steps() const { return static_cast<int>(betas.size()); }
  double beta(int k) const { return betas[check(k)]; }
  double alpha(int k) const { return alphas[check(k)]; }
  double abar(int k) const { return alpha_bar[check(k)]; }
  // abar(0) = 1 by convention: the k=1 posterior injects no noise.
  double abar_prev(int k) const { return k <= 1 ? 1.0 : alpha_bar[check(k) - 1]; }

 private:
  int check(int k) const {
    if (k < 1 || k > steps()) throw Error("schedule: timestep out of range");
    return k - 1;
  }
};

// Flattened, normalized trajectory vector: (dx, dy, dw) / scale per waypoint.
inline VectorXd traj_to_vec(const Trajectory& t, double scale) {
  const int n = static_cast<int>(t.size());
  VectorXd v(3 * n);
  for (int i = 0; i < n; ++i) {
    v[3 * i + 0] = t.waypoints[i].dx / scale;
    v[3 * i + 1] = t.waypoints[i].dy / scale;
    v[3 * i + 2] = t.waypoints[i].dw / scale;
  }
  return v;
}

inline Trajectory vec_to_traj(const VectorXd& v, double scale) {
  if (v.size() % 3 != 0) throw Error("vec_to_traj: length not a multiple of 3");
  Trajectory t;
  t.waypoints.resize(v.size() / 3);
  for (int i = 0; i < static_cast<int>(t.waypoints.size()); ++i)
    t.waypoints[i] = {v[3 * i] * scale, v[3 * i + 1] * scale, v[3 * i + 2] * scale};
  return t;
}

// Forward noising: a_k = sqrt(abar_k) a0 + sqrt(1 - abar_k) eps.
inline VectorXd ddpm_noise(const VectorXd& a0, int k, const VectorXd& eps,
                           const DiffusionSchedule& sched) {
  if (eps.size() != a0.size()) throw Error("ddpm_noise: eps shape mismatch");
  const double ab = sched.abar(k);
  return std::sqrt(ab) * a0 + std::sqrt(1.0 - ab) * eps;
}

struct LossReport {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
  bool finite = true;
};

inline LossReport total_loss(const LossReport& actor, const LossReport& critic, double lambda) {
  if (lambda < 0.0) throw Error("total_loss: lambda must be >= 0");
  LossReport r;
  r.actor_loss = actor.actor_loss;
  r.critic_loss = critic.critic_loss;
  r.total = r.actor_loss + lambda * r.critic_loss;
  r.finite = actor.finite && critic.finite;
  return r;
}

namespace detail {

// One affine layer's slot in the flat parameter vector.
struct Lin {
  int wo = 0, bo = 0, rows = 0, cols = 0;

  Eigen::Map<const MatrixXd> W(const VectorXd& th) const {
    return {th.data() + wo, rows, cols};
  }
  Eigen::Map<MatrixXd> W(VectorXd& th) const { return {th.data() + wo, rows, cols}; }
  Eigen::Map<const VectorXd> b(const VectorXd& th) const { return {th.data() + bo, rows}; }
  Eigen::Map<VectorXd> b(VectorXd& th) const { return {th.data() + bo, rows}; }
  int count() const { return rows * (cols + 1); }
};

struct Layout {
  Lin e1, e2;          // encoder
  Lin d1, d2, d3, d4;  // denoiser (3 tanh hidden + linear out)
  Lin t1;              // critic trajectory embedding
  Lin c1, c2;          // critic head (tanh hidden + linear scalar)
  int total = 0;

  static Layout make(const PolicyConfig& cfg) {
    Layout l;
    int off = 0;
    const auto add = [&off](int rows, int cols) {
      Lin lin{off, off + rows * cols, rows, cols};
      off += lin.count();
      return lin;
    };
    l.e1 = add(cfg.enc_hidden, cfg.obs_dim());
    l.e2 = add(cfg.feat, cfg.enc_hidden);
    l.d1 = add(cfg.den_hidden, cfg.den_in());
    l.d2 = add(cfg.den_hidden, cfg.den_hidden);
    l.d3 = add(cfg.den_hidden, cfg.den_hidden);
    l.d4 = add(cfg.act_dim(), cfg.den_hidden);
    l.t1 = add(cfg.critic_emb, cfg.act_dim());
    l.c1 = add(cfg.critic_hidden, cfg.feat + cfg.critic_emb);
    l.c2 = add(1, cfg.critic_hidden);
    l.total = off;
    return l;
  }
};

inline MatrixXd affine(const Lin& l, const VectorXd& th, const MatrixXd& x) {
  return (l.W(th) * x).colwise() + l.b(th);
}

// Backprop through `out = act(W x + b)`: accumulates dW/db into the grad
// vector and returns dL/dx. `dpost` is dL/d(pre-activation).
inline MatrixXd affine_back(const Lin& l, const VectorXd& th, VectorXd& grad, const MatrixXd& x,
                            const MatrixXd& dpost) {
  l.W(grad) += dpost * x.transpose();
  l.b(grad) += dpost.rowwise().sum();
  return l.W(th).transpose() * dpost;
}

// SiLU keeps gradients alive where tanh saturates; the denoiser has to learn
// gains of ~1/sqrt(1 - abar_1) at the low-noise end of the schedule, which a
// bounded activation fits far too slowly. Smooth, so finite differences
// still validate the backward pass.
inline MatrixXd silu(const MatrixXd& z) {
  return z.array() * (1.0 / (1.0 + (-z.array()).exp()));
}

// dL/dz from dL/d(silu(z)); needs the pre-activation, not the output.
inline MatrixXd silu_back(const MatrixXd& z, const MatrixXd& dout) {
  const auto sig = 1.0 / (1.0 + (-z.array()).exp());
  return dout.array() * sig * (1.0 + z.array() * (1.0 - sig));
}

inline MatrixXd randn(int rows, int cols, Rng& rng) {
  MatrixXd m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = draw_normal(rng, 0.0, 1.0);
  return m;
}

}  // namespace detail

class Policy {
 public:
  Policy(const PolicyConfig& cfg, Rng& rng) : cfg_(cfg), layout_(detail::Layout::make(cfg)) {
    if (cfg.temb % 2 != 0) throw Error("policy: temb must be even");
    theta_ = VectorXd::Zero(layout_.total);
    for (const detail::Lin* l : layers()) {
      const double limit = std::sqrt(6.0 / (l->rows + l->cols));
      auto w = l->W(theta_);
      for (int c = 0; c < w.cols(); ++c)
        for (int r = 0; r < w.rows(); ++r) w(r, c) = draw_uniform(rng, -limit, limit);
    }
  }

  const PolicyConfig& config() const { return cfg_; }
  const detail::Layout& layout() const { return layout_; }
  int param_count() const { return layout_.total; }
  VectorXd& params() { return theta_; }
  const VectorXd& params() const { return theta_; }
  int64_t global_step = 0;

  // -------------------------------------------------------------------------
  // Forward passes
  // -------------------------------------------------------------------------

  // Raw network input for one observation; goal entries zeroed for the
  // critic's goal-agnostic condition.
  VectorXd obs_input(const Observation& obs, bool zero_goal) const {
    if (static_cast<int>(obs.depth_rays.size()) != cfg_.rays)
      throw Error("encode: observation has " + std::to_string(obs.depth_rays.size()) +
                  " rays, config expects " + std::to_string(cfg_.rays));
    VectorXd x(cfg_.obs_dim());
    for (int i = 0; i < cfg_.rays; ++i) x[i] = obs.depth_rays[i] / cfg_.range_scale;
    if (zero_goal) {
      x.tail(3).setZero();
    } else {
      x[cfg_.rays + 0] = obs.goal_dist / cfg_.goal_scale;
      x[cfg_.rays + 1] = std::cos(obs.goal_bearing);
      x[cfg_.rays + 2] = std::sin(obs.goal_bearing);
    }
    return x;
  }

  MatrixXd encode_batch(const MatrixXd& x) const {
    if (x.rows() != cfg_.obs_dim()) throw Error("encode: input dimension mismatch");
    const MatrixXd h1 = detail::silu(detail::affine(layout_.e1, theta_, x));
    return detail::silu(detail::affine(layout_.e2, theta_, h1));
  }

  // (cond_full, cond_goalless) for one observation.
  std::pair<VectorXd, VectorXd> encode(const Observation& obs) const {
    MatrixXd x(cfg_.obs_dim(), 2);
    x.col(0) = obs_input(obs, false);
    x.col(1) = obs_input(obs, true);
    const MatrixXd f = encode_batch(x);
    return {f.col(0), f.col(1)};
  }

  VectorXd time_embedding(int k) const {
    // Spread k over a nominal 1000-step range first; with short schedules the
    // raw index leaves most of the frequency bank flat and the denoiser
    // cannot tell neighbouring timesteps apart.
    const double t = k * 1000.0 / cfg_.N;
    VectorXd e(cfg_.temb);
    const int half = cfg_.temb / 2;
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      e[2 * i] = std::sin(t * freq);
      e[2 * i + 1] = std::cos(t * freq);
    }
    return e;
  }

  // The MLP predicts the clean trajectory f(a_k, k, cond); the noise estimate
  // is recovered analytically as eps_hat = (a_k - sqrt(abar) f) / sqrt(1-abar).
  // eps_theta for a batch of noised trajectories; ks gives each column's
  // timestep and cond each column's condition features. The head predicts the
  // noise directly, so MSE(eps, eps_hat) weights every timestep equally —
  // which matches the sampler's sensitivity, since a step mixes eps_hat in
  // with coefficient beta_k/sqrt(1-abar_k) (tiny at low k, where the
  // prediction problem is ill-conditioned, and O(1) at high k, where the
  // conditional structure has to come from the network).
  MatrixXd denoise_batch(const MatrixXd& a, const std::vector<int>& ks,
                         const MatrixXd& cond) const {
    MatrixXd u = denoiser_input(a, ks, cond);
    const MatrixXd h1 = detail::silu(detail::affine(layout_.d1, theta_, u));
    const MatrixXd h2 = detail::silu(detail::affine(layout_.d2, theta_, h1));
    const MatrixXd h3 = detail::silu(detail::affine(layout_.d3, theta_, h2));
    return detail::affine(layout_.d4, theta_, h3);
  }

  // Critic values for normalized trajectory columns under per-column
  // goal-agnostic conditions.
  Eigen::RowVectorXd critic_batch(const MatrixXd& cond_goalless, const MatrixXd& a_norm) const {
    const MatrixXd e = detail::silu(detail::affine(layout_.t1, theta_, a_norm));
    MatrixXd q(cfg_.feat + cfg_.critic_emb, a_norm.cols());
    q.topRows(cfg_.feat) = cond_goalless;
    q.bottomRows(cfg_.critic_emb) = e;
    const MatrixXd h = detail::silu(detail::affine(layout_.c1, theta_, q));
    return detail::affine(layout_.c2, theta_, h).row(0);
  }

  double critic_value(const VectorXd& cond_goalless, const Trajectory& traj) const {
    const VectorXd a = traj_to_vec(traj, cfg_.traj_scale);
    return critic_batch(cond_goalless, a)(0);
  }

  // -------------------------------------------------------------------------
  // Losses with gradients
  // -------------------------------------------------------------------------

  // Denoising objective, Eq. 5 shape: per tuple draw k ~ U[1, N] and
  // eps ~ N(0, I), predict eps from the noised normalized expert trajectory.
  LossReport actor_loss(const std::vector<DataTuple>& batch, const DiffusionSchedule& sched,
                        Rng& rng, bool recompute_features, VectorXd* grad) const {
    const int b = static_cast<int>(batch.size());
    if (b == 0) throw Error("actor_loss: empty batch");
    std::vector<int> ks(b);
    for (int i = 0; i < b; ++i) ks[i] = static_cast<int>(draw_int(rng, 1, sched.steps()));
    const MatrixXd eps = detail::randn(cfg_.act_dim(), b, rng);
    return actor_loss_fixed(batch, sched, ks, eps, recompute_features, grad);
  }

  // Deterministic core with (k, eps) pinned; this is what the
  // finite-difference oracle exercises.
  LossReport actor_loss_fixed(const std::vector<DataTuple>& batch,
                              const DiffusionSchedule& sched, const std::vector<int>& ks,
                              const MatrixXd& eps, bool recompute_features,
                              VectorXd* grad) const {
    const int b = static_cast<int>(batch.size());
    if (b == 0) throw Error("actor_loss: empty batch");
    if (static_cast<int>(ks.size()) != b || eps.cols() != b || eps.rows() != cfg_.act_dim())
      throw Error("actor_loss: ks/eps shape mismatch");

    MatrixXd ak(cfg_.act_dim(), b);
    for (int i = 0; i < b; ++i) {
      const VectorXd a0 = expert_vec(batch[i]);
      ak.col(i) = ddpm_noise(a0, ks[i], eps.col(i), sched);
    }

    MatrixXd xobs, ez1, eh1, ez2, cond;  // encoder caches, used when recomputing
    if (recompute_features) {
      xobs.resize(cfg_.obs_dim(), b);
      for (int i = 0; i < b; ++i) xobs.col(i) = obs_input(batch[i].obs, false);
      ez1 = detail::affine(layout_.e1, theta_, xobs);
      eh1 = detail::silu(ez1);
      ez2 = detail::affine(layout_.e2, theta_, eh1);
      cond = detail::silu(ez2);
    } else {
      cond.resize(cfg_.feat, b);
      for (int i = 0; i < b; ++i) {
        if (static_cast<int>(batch[i].cached_features.size()) != cfg_.feat)
          throw Error("actor_loss: tuple lacks cached features");
        for (int r = 0; r < cfg_.feat; ++r) cond(r, i) = batch[i].cached_features[r];
      }
    }

    const MatrixXd u = denoiser_input(ak, ks, cond);
    const MatrixXd z1 = detail::affine(layout_.d1, theta_, u);
    const MatrixXd h1 = detail::silu(z1);
    const MatrixXd z2 = detail::affine(layout_.d2, theta_, h1);
    const MatrixXd h2 = detail::silu(z2);
    const MatrixXd z3 = detail::affine(layout_.d3, theta_, h2);
    const MatrixXd h3 = detail::silu(z3);
    const MatrixXd out = detail::affine(layout_.d4, theta_, h3);  // eps_hat

    const MatrixXd diff = out - eps;
    const double denom = static_cast<double>(b) * cfg_.act_dim();
    LossReport rep;
    rep.actor_loss = diff.squaredNorm() / denom;
    rep.total = rep.actor_loss;
    rep.finite = std::isfinite(rep.actor_loss);

    if (grad) {
      *grad = VectorXd::Zero(layout_.total);
      const MatrixXd dout = (2.0 / denom) * diff;
      const MatrixXd dh3 = detail::affine_back(layout_.d4, theta_, *grad, h3, dout);
      const MatrixXd dh2 =
          detail::affine_back(layout_.d3, theta_, *grad, h2, detail::silu_back(z3, dh3));
      const MatrixXd dh1 =
          detail::affine_back(layout_.d2, theta_, *grad, h1, detail::silu_back(z2, dh2));
      const MatrixXd du =
          detail::affine_back(layout_.d1, theta_, *grad, u, detail::silu_back(z1, dh1));
      if (recompute_features) {
        const MatrixXd dcond = du.bottomRows(cfg_.feat);
        const MatrixXd deh1 = detail::affine_back(layout_.e2, theta_, *grad, eh1,
                                                  detail::silu_back(ez2, dcond));
        detail::affine_back(layout_.e1, theta_, *grad, xobs, detail::silu_back(ez1, deh1));
      }
      rep.grad_norm = grad->norm();
    }
    return rep;
  }

  // Critic regression to the safety target, Eq. 6. The goal-agnostic
  // condition is always recomputed, so encoder gradients flow here even when
  // the actor path uses cached features.
  LossReport critic_loss(const std::vector<DataTuple>& batch, VectorXd* grad) const {
    const int b = static_cast<int>(batch.size());
    if (b == 0) throw Error("critic_loss: empty batch");
    MatrixXd xobs(cfg_.obs_dim(), b), a0(cfg_.act_dim(), b);
    Eigen::RowVectorXd target(b);
    for (int i = 0; i < b; ++i) {
      xobs.col(i) = obs_input(batch[i].obs, true);
      a0.col(i) = expert_vec(batch[i]);
      target[i] = batch[i].safety_target;
    }
    const MatrixXd ez1 = detail::affine(layout_.e1, theta_, xobs);
    const MatrixXd eh1 = detail::silu(ez1);
    const MatrixXd ez2 = detail::affine(layout_.e2, theta_, eh1);
    const MatrixXd condg = detail::silu(ez2);
    const MatrixXd tz = detail::affine(layout_.t1, theta_, a0);
    const MatrixXd emb = detail::silu(tz);
    MatrixXd q(cfg_.feat + cfg_.critic_emb, b);
    q.topRows(cfg_.feat) = condg;
    q.bottomRows(cfg_.critic_emb) = emb;
    const MatrixXd cz = detail::affine(layout_.c1, theta_, q);
    const MatrixXd h = detail::silu(cz);
    const Eigen::RowVectorXd v = detail::affine(layout_.c2, theta_, h).row(0);

    const Eigen::RowVectorXd diff = v - target;
    LossReport rep;
    rep.critic_loss = diff.squaredNorm() / b;
    rep.total = rep.critic_loss;
    rep.finite = std::isfinite(rep.critic_loss);

    if (grad) {
      *grad = VectorXd::Zero(layout_.total);
      const MatrixXd dv = (2.0 / b) * diff;
      const MatrixXd dh = detail::affine_back(layout_.c2, theta_, *grad, h, dv);
      const MatrixXd dq =
          detail::affine_back(layout_.c1, theta_, *grad, q, detail::silu_back(cz, dh));
      detail::affine_back(layout_.t1, theta_, *grad, a0,
                          detail::silu_back(tz, dq.bottomRows(cfg_.critic_emb)));
      const MatrixXd dcond = dq.topRows(cfg_.feat);
      const MatrixXd deh1 =
          detail::affine_back(layout_.e2, theta_, *grad, eh1, detail::silu_back(ez2, dcond));
      detail::affine_back(layout_.e1, theta_, *grad, xobs, detail::silu_back(ez1, deh1));
      rep.grad_norm = grad->norm();
    }
    return rep;
  }

  // -------------------------------------------------------------------------
  // Sampling and ranking
  // -------------------------------------------------------------------------

  // DDPM ancestral sampling for several conditions at once; returns n
  // trajectories (real scale) per condition column.
  std::vector<std::vector<Trajectory>> sample_batch(const MatrixXd& cond, int n,
                                                    const DiffusionSchedule& sched,
                                                    Rng& rng) const {
    if (n < 1) throw Error("sample: n must be >= 1");
    if (cond.rows() != cfg_.feat) throw Error("sample: condition dimension mismatch");
    const int b = static_cast<int>(cond.cols());
    const int cols = b * n;
    MatrixXd cond_rep(cfg_.feat, cols);
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < n; ++j) cond_rep.col(i * n + j) = cond.col(i);

    MatrixXd a = detail::randn(cfg_.act_dim(), cols, rng);
    std::vector<int> ks(cols);
    for (int k = sched.steps(); k >= 1; --k) {
      std::fill(ks.begin(), ks.end(), k);
      const MatrixXd eps_hat = denoise_batch(a, ks, cond_rep);
      const double ab = sched.abar(k);
      a = (a - (sched.beta(k) / std::sqrt(1.0 - ab)) * eps_hat) / std::sqrt(sched.alpha(k));
      if (k > 1) {
        const double var = sched.beta(k) * (1.0 - sched.abar_prev(k)) / (1.0 - ab);
        a += std::sqrt(var) * detail::randn(cfg_.act_dim(), cols, rng);
      }
    }

    std::vector<std::vector<Trajectory>> out(b);
    for (int i = 0; i < b; ++i) {
      out[i].reserve(n);
      for (int j = 0; j < n; ++j)
        out[i].push_back(vec_to_traj(a.col(i * n + j), cfg_.traj_scale));
    }
    return out;
  }

  std::vector<Trajectory> sample_trajectories(const VectorXd& cond, int n,
                                              const DiffusionSchedule& sched, Rng& rng) const {
    return sample_batch(cond, n, sched, rng)[0];
  }

  // Argmax critic score; exact ties keep the lowest index.
  int rank_index(const VectorXd& cond_goalless, const std::vector<Trajectory>& trajs) const {
    if (trajs.empty()) throw Error("rank: no trajectories");
    MatrixXd a(cfg_.act_dim(), trajs.size());
    for (size_t i = 0; i < trajs.size(); ++i) a.col(i) = traj_to_vec(trajs[i], cfg_.traj_scale);
    MatrixXd cond(cfg_.feat, trajs.size());
    cond.colwise() = cond_goalless;
    const Eigen::RowVectorXd v = critic_batch(cond, a);
    int best = 0;
    for (int i = 1; i < v.size(); ++i)
      if (v[i] > v[best]) best = i;
    return best;
  }

  Trajectory rank_and_select(const VectorXd& cond_goalless,
                             const std::vector<Trajectory>& trajs) const {
    return trajs[rank_index(cond_goalless, trajs)];
  }

  // -------------------------------------------------------------------------
  // Checkpoints
  // -------------------------------------------------------------------------

  std::string serialize() const {
    std::string out;
    const auto put_u32 = [&out](uint32_t v) { out.append(reinterpret_cast<char*>(&v), 4); };
    const auto put_i64 = [&out](int64_t v) { out.append(reinterpret_cast<char*>(&v), 8); };
    const auto put_f64 = [&out](double v) { out.append(reinterpret_cast<char*>(&v), 8); };
    put_u32(kCheckpointMagic);
    put_u32(kCheckpointVersion);
    for (int v : {cfg_.rays, cfg_.K, cfg_.feat, cfg_.enc_hidden, cfg_.den_hidden, cfg_.temb,
                  cfg_.critic_emb, cfg_.critic_hidden, cfg_.N})
      put_u32(static_cast<uint32_t>(v));
    for (double v : {cfg_.beta_min, cfg_.beta_max, cfg_.traj_scale, cfg_.range_scale,
                     cfg_.goal_scale})
      put_f64(v);
    put_i64(global_step);
    put_i64(layout_.total);
    out.append(reinterpret_cast<const char*>(theta_.data()), sizeof(double) * layout_.total);
    return out;
  }

  static Policy deserialize(const std::string& blob) {
    size_t pos = 0;
    const auto need = [&](size_t n) {
      if (pos + n > blob.size()) throw Error("checkpoint: truncated");
    };
    const auto get_u32 = [&] {
      need(4);
      uint32_t v;
      std::memcpy(&v, blob.data() + pos, 4);
      pos += 4;
      return v;
    };
    const auto get_i64 = [&] {
      need(8);
      int64_t v;
      std::memcpy(&v, blob.data() + pos, 8);
      pos += 8;
      return v;
    };
    const auto get_f64 = [&] {
      need(8);
      double v;
      std::memcpy(&v, blob.data() + pos, 8);
      pos += 8;
      return v;
    };
    if (get_u32() != kCheckpointMagic) throw Error("checkpoint: bad magic");
    if (get_u32() != kCheckpointVersion) throw Error("checkpoint: unsupported version");
    PolicyConfig cfg;
    cfg.rays = static_cast<int>(get_u32());
    cfg.K = static_cast<int>(get_u32());
    cfg.feat = static_cast<int>(get_u32());
    cfg.enc_hidden = static_cast<int>(get_u32());
    cfg.den_hidden = static_cast<int>(get_u32());
    cfg.temb = static_cast<int>(get_u32());
    cfg.critic_emb = static_cast<int>(get_u32());
    cfg.critic_hidden = static_cast<int>(get_u32());
    cfg.N = static_cast<int>(get_u32());
    cfg.beta_min = get_f64();
    cfg.beta_max = get_f64();
    cfg.traj_scale = get_f64();
    cfg.range_scale = get_f64();
    cfg.goal_scale = get_f64();
    Policy p(cfg);
    p.global_step = get_i64();
    const int64_t n = get_i64();
    if (n != p.layout_.total) throw Error("checkpoint: parameter count mismatch");
    need(sizeof(double) * n);
    std::memcpy(p.theta_.data(), blob.data() + pos, sizeof(double) * n);
    return p;
  }

  void save_checkpoint(const std::string& path) const { atomic_write_file(path, serialize()); }

  static Policy load_checkpoint(const std::string& path) {
    return deserialize(read_file(path));
  }

 private:
  // Zero-initialized; used by deserialize before the blob overwrites theta.
  explicit Policy(const PolicyConfig& cfg) : cfg_(cfg), layout_(detail::Layout::make(cfg)) {
    theta_ = VectorXd::Zero(layout_.total);
  }

  std::vector<const detail::Lin*> layers() const {
    return {&layout_.e1, &layout_.e2, &layout_.d1, &layout_.d2, &layout_.d3,
            &layout_.d4, &layout_.t1, &layout_.c1, &layout_.c2};
  }

  VectorXd expert_vec(const DataTuple& t) const {
    if (static_cast<int>(t.expert.size()) != cfg_.K)
      throw Error("policy: expert trajectory must have exactly K waypoints");
    return traj_to_vec(t.expert, cfg_.traj_scale);
  }

  MatrixXd denoiser_input(const MatrixXd& a, const std::vector<int>& ks,
                          const MatrixXd& cond) const {
    if (a.rows() != cfg_.act_dim() || cond.rows() != cfg_.feat || a.cols() != cond.cols() ||
        static_cast<int>(ks.size()) != a.cols())
      throw Error("denoise: input shape mismatch");
    MatrixXd u(cfg_.den_in(), a.cols());
    u.topRows(cfg_.act_dim()) = a;
    for (int i = 0; i < a.cols(); ++i)
      u.block(cfg_.act_dim(), i, cfg_.temb, 1) = time_embedding(ks[i]);
    u.bottomRows(cfg_.feat) = cond;
    return u;
  }

  static constexpr uint32_t kCheckpointMagic = 0x4e4c5043;  // "NLPC"
  static constexpr uint32_t kCheckpointVersion = 1;

  PolicyConfig cfg_;
  detail::Layout layout_;
  VectorXd theta_;
};

// ---------------------------------------------------------------------------
// Optimizer: adaptive moments with bias correction, applied after global-norm
// clipping. Non-finite gradients skip the update entirely.
// ---------------------------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  VectorXd m, v;
  int64_t t = 0;

  explicit AdamState(int n = 0) : m(VectorXd::Zero(n)), v(VectorXd::Zero(n)) {}
};

// Returns false when the gradient was non-finite and the update was skipped.
inline bool sgd_update(Policy& policy, AdamState& state, VectorXd grad, double lr, double clip,
                       const AdamConfig& cfg = {}) {
  if (lr <= 0.0) throw Error("sgd_update: lr must be positive");
  if (grad.size() != policy.param_count()) throw Error("sgd_update: gradient size mismatch");
  if (state.m.size() != grad.size()) state = AdamState(static_cast<int>(grad.size()));
  const double norm = grad.norm();
  if (!std::isfinite(norm)) return false;
  if (clip > 0.0 && norm > clip) grad *= clip / norm;
  ++state.t;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  policy.params().array() -=
      lr * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + cfg.eps);
  ++policy.global_step;
  return true;
}

}  // namespace navloop
