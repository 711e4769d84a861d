#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "trip/autodiff/ops.hpp"

namespace trip::train {

struct LossWeights {
    double w_recon = 1.0;
    double w_cd = 10.0;
    double w_kl_start = 1e-9;
    double w_kl_target = 4e-9;
    double kl_anneal_epochs = 5.0;
    double w_boundary = 1.0;
    double w_triplane_l1 = 5e-4;
    double beta_occ = 0.05;
    double beta_cd = 0.05;
    double band_delta = 0.1;
};

// Linear ramp from the start to the target weight over the annealing
// window, constant afterwards.
inline double kl_weight_at(double epoch, const LossWeights& w) {
    if (w.kl_anneal_epochs <= 0) return w.w_kl_target;
    double t = std::min(std::max(epoch / w.kl_anneal_epochs, 0.0), 1.0);
    return w.w_kl_start + (w.w_kl_target - w.w_kl_start) * t;
}

// Elementwise 0.5 d^2 / beta for |d| < beta, |d| - beta/2 beyond, averaged.
template <class S>
ad::Var<S> smooth_l1(ad::Var<S> pred, const std::vector<S>& target, S beta) {
    if (pred.numel() != target.size())
        throw internal_error("smooth_l1: prediction/target size mismatch");
    ad::Tensor<S> t(pred.shape(), target);
    ad::Var<S> a = ad::abs_op(ad::sub_const(pred, t));
    ad::Var<S> quad = ad::scale(ad::square_op(ad::clamp_op(a, S(0), beta)), S(0.5) / beta);
    ad::Var<S> lin = ad::relu(ad::add_scalar(a, -beta));
    return ad::mean_all(ad::add(quad, lin));
}

// 0.5 * sum(exp(logvar) + mu^2 - 1 - logvar) over every latent element.
template <class S>
ad::Var<S> kl_divergence(ad::Var<S> mu, ad::Var<S> logvar) {
    ad::Var<S> inside = ad::sub(ad::add(ad::exp_op(logvar), ad::square_op(mu)),
                                ad::add_scalar(logvar, S(1)));
    return ad::scale(ad::sum_all(inside), S(0.5));
}

// Mean squared deviation of predictions from 1/2 over targets within
// band_delta of the surface value 1/2; zero when the band is empty.
template <class S>
ad::Var<S> boundary_loss(ad::Var<S> o_pred, const std::vector<S>& o_true, S band_delta) {
    if (o_pred.numel() != o_true.size())
        throw internal_error("boundary_loss: prediction/target size mismatch");
    ad::Tensor<S> mask(o_pred.shape());
    size_t in_band = 0;
    for (size_t i = 0; i < o_true.size(); ++i) {
        bool b = std::abs(double(o_true[i]) - 0.5) < double(band_delta);
        mask[i] = b ? S(1) : S(0);
        in_band += b;
    }
    if (in_band == 0) return o_pred.tape->constant(ad::Tensor<S>::scalar(S(0)));
    ad::Var<S> sq = ad::square_op(ad::add_scalar(o_pred, S(-0.5)));
    return ad::scale(ad::sum_all(ad::mul_const(sq, std::move(mask))), S(1) / S(in_band));
}

// Mean |element| across all three planes.
template <class S>
ad::Var<S> triplane_l1(const std::array<ad::Var<S>, 3>& planes) {
    size_t n = planes[0].numel() + planes[1].numel() + planes[2].numel();
    ad::Var<S> s = ad::add(ad::add(ad::sum_all(ad::abs_op(planes[0])),
                                   ad::sum_all(ad::abs_op(planes[1]))),
                           ad::sum_all(ad::abs_op(planes[2])));
    return ad::scale(s, S(1) / S(n));
}

template <class S>
struct LossComponents {
    ad::Var<S> recon;
    ad::Var<S> cd;
    ad::Var<S> kl;
    ad::Var<S> boundary;
    ad::Var<S> tri;
};

struct LossBreakdown {
    double recon = 0, cd = 0, kl = 0, boundary = 0, tri = 0;
    double kl_weight = 0;
    double total = 0;

    // Weighted sum recomputed from the logged terms.
    double weighted_sum(const LossWeights& w) const {
        return w.w_recon * recon + w.w_cd * cd + kl_weight * kl + w.w_boundary * boundary +
               w.w_triplane_l1 * tri;
    }
};

// Weighted sum of the five terms with the KL weight taken from the
// annealing schedule at the given epoch.
template <class S>
std::pair<ad::Var<S>, LossBreakdown> total_loss(const LossComponents<S>& c,
                                                const LossWeights& w, double epoch) {
    LossBreakdown b;
    b.recon = double(c.recon.val().scalar_value());
    b.cd = double(c.cd.val().scalar_value());
    b.kl = double(c.kl.val().scalar_value());
    b.boundary = double(c.boundary.val().scalar_value());
    b.tri = double(c.tri.val().scalar_value());
    b.kl_weight = kl_weight_at(epoch, w);
    ad::Var<S> total = ad::add(
        ad::add(ad::add(ad::add(ad::scale(c.recon, S(w.w_recon)), ad::scale(c.cd, S(w.w_cd))),
                        ad::scale(c.kl, S(b.kl_weight))),
                ad::scale(c.boundary, S(w.w_boundary))),
        ad::scale(c.tri, S(w.w_triplane_l1)));
    b.total = double(total.val().scalar_value());
    return {total, b};
}

}  // namespace trip::train
