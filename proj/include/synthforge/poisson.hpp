#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "synthforge/error.hpp"
#include "synthforge/image.hpp"
#include "synthforge/log.hpp"

namespace synthforge::compositor {

struct PoissonParams {
    bool mixed_gradients = true;
    double tol = 1e-4;        // relative residual |r|_inf / max(|b|_inf, eps)
    int max_iter = 10000;
    float region_threshold = 0.5f;  // alpha level defining the clone region
    double sor_omega = 1.9;
    int check_every = 32;     // residual checkpoint spacing, iterations
};

struct PoissonStats {
    int iterations = 0;
    double final_residual = 0;
    bool converged = true;
    std::vector<double> residual_checkpoints;
};

// Gradient-domain clone of an RGBA foreground onto an RGB background with
// the foreground's top-left at (tlx, tly). Solves the discrete Poisson
// equation over the region alpha >= region_threshold with Dirichlet
// boundary equal to the background, guidance field = foreground gradients
// (or the larger-magnitude of foreground/background gradients when
// mixed_gradients). Gauss-Seidel sweeps with successive over-relaxation.
inline ImageF poisson_blend(const ImageF& background, const ImageF& fg, int tlx, int tly,
                            const PoissonParams& params, PoissonStats* stats = nullptr) {
    if (background.channels() < 3 || fg.channels() != 4) {
        raise(ErrorKind::InvalidInput, "poisson_blend expects RGB background and RGBA foreground");
    }
    const int bw = background.width(), bh = background.height();
    const int fw = fg.width(), fh = fg.height();

    // Region pixels in foreground-raster coordinates.
    std::vector<int> unknown_index(static_cast<std::size_t>(fw) * fh, -1);
    std::vector<int> px, py;  // bg coords per unknown
    for (int y = 0; y < fh; ++y) {
        for (int x = 0; x < fw; ++x) {
            if (fg(x, y, 3) < params.region_threshold) continue;
            int gx = tlx + x, gy = tly + y;
            if (gx < 1 || gy < 1 || gx >= bw - 1 || gy >= bh - 1) {
                raise(ErrorKind::RegionOutOfBounds,
                      "clone region must be strictly interior to the background");
            }
            unknown_index[static_cast<std::size_t>(y) * fw + x] = static_cast<int>(px.size());
            px.push_back(gx);
            py.push_back(gy);
        }
    }
    const int n = static_cast<int>(px.size());
    ImageF out = background;
    if (n == 0) {
        log_warn("poisson_blend: empty clone region, background returned unchanged");
        if (stats) *stats = PoissonStats{};
        return out;
    }

    static const int DX[4] = {1, -1, 0, 0};
    static const int DY[4] = {0, 0, 1, -1};

    // Neighbor structure is channel-independent.
    std::vector<std::array<int, 4>> nbr(n);
    for (int i = 0; i < n; ++i) {
        int fx = px[i] - tlx, fy = py[i] - tly;
        for (int k = 0; k < 4; ++k) {
            int nfx = fx + DX[k], nfy = fy + DY[k];
            int idx = -1;
            if (nfx >= 0 && nfy >= 0 && nfx < fw && nfy < fh) {
                idx = unknown_index[static_cast<std::size_t>(nfy) * fw + nfx];
            }
            nbr[i][k] = idx;
        }
    }

    PoissonStats local_stats;
    for (int c = 0; c < 3; ++c) {
        std::vector<double> f(n), b(n, 0.0);
        double b_inf = 0;
        for (int i = 0; i < n; ++i) {
            int fx = px[i] - tlx, fy = py[i] - tly;
            f[i] = fg(fx, fy, c);
            double acc = 0;
            for (int k = 0; k < 4; ++k) {
                int nfx = fx + DX[k], nfy = fy + DY[k];
                int gx = px[i] + DX[k], gy = py[i] + DY[k];
                double bg_grad = background(px[i], py[i], c) - background(gx, gy, c);
                double v;
                if (nfx >= 0 && nfy >= 0 && nfx < fw && nfy < fh) {
                    double fg_grad = fg(fx, fy, c) - fg(nfx, nfy, c);
                    v = (params.mixed_gradients && std::abs(bg_grad) > std::abs(fg_grad))
                            ? bg_grad
                            : fg_grad;
                } else {
                    // neighbor outside the source raster: fall back to the
                    // target gradient
                    v = bg_grad;
                }
                acc += v;
                if (nbr[i][k] < 0) acc += background(gx, gy, c);  // Dirichlet term
            }
            b[i] = acc;
            b_inf = std::max(b_inf, std::abs(acc));
        }
        const double b_scale = std::max(b_inf, 1e-12);

        auto residual_inf = [&] {
            double r_inf = 0;
            for (int i = 0; i < n; ++i) {
                double sum = 0;
                for (int k = 0; k < 4; ++k) {
                    if (nbr[i][k] >= 0) sum += f[nbr[i][k]];
                }
                r_inf = std::max(r_inf, std::abs(b[i] + sum - 4.0 * f[i]));
            }
            return r_inf / b_scale;
        };

        double rel = residual_inf();
        if (c == 0) local_stats.residual_checkpoints.push_back(rel);
        int iter = 0;
        while (rel > params.tol && iter < params.max_iter) {
            for (int i = 0; i < n; ++i) {
                double sum = 0;
                for (int k = 0; k < 4; ++k) {
                    if (nbr[i][k] >= 0) sum += f[nbr[i][k]];
                }
                double gs = (b[i] + sum) * 0.25;
                f[i] += params.sor_omega * (gs - f[i]);
            }
            ++iter;
            if (iter % params.check_every == 0 || iter == params.max_iter) {
                rel = residual_inf();
                if (c == 0) local_stats.residual_checkpoints.push_back(rel);
            }
        }
        if (c == 0) {
            local_stats.iterations = iter;
            local_stats.final_residual = rel;
        }
        if (rel > params.tol) {
            local_stats.converged = false;
            log_warn("poisson_blend: channel " + std::to_string(c) +
                     " stopped at relative residual " + std::to_string(rel));
        }
        for (int i = 0; i < n; ++i) {
            out(px[i], py[i], c) = clamp01(static_cast<float>(f[i]));
        }
    }
    if (stats) *stats = local_stats;
    return out;
}

}  // namespace synthforge::compositor
