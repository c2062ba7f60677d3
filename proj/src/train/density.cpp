#include "hsr/train/density.hpp"

#include "hsr/error.hpp"

namespace hsr {

DensityOutcome densify_and_prune(GaussianCloud& cloud, const GradAccumulator& acc,
                                 const DensityConfig& cfg, double scene_extent, Rng& rng) {
    const Index n = cloud.size();
    if (acc.size() != n)
        throw PreconditionError("densify_and_prune: accumulator not aligned with cloud");

    const double size_boundary = cfg.percent_dense * scene_extent;

    std::vector<bool> keep(n, true);
    DensityOutcome out;

    // Prune first so dead splats never spawn children.
    for (Index i = 0; i < n; ++i) {
        if (sigmoid(cloud.opacity_logits[i]) < cfg.prune_opacity) {
            keep[i] = false;
            ++out.pruned;
        }
    }

    GaussianCloud additions(0, cloud.sh_degree(), cloud.space);
    additions.sh.resize(0, cloud.sh.cols());
    std::vector<Index> addition_sources;
    Index budget = cfg.max_gaussians - (n - out.pruned);

    for (Index i = 0; i < n && budget > 0; ++i) {
        if (!keep[i]) continue;
        const double avg = acc.count[i] > 0 ? acc.sum[i] / acc.count[i] : 0.0;
        if (avg <= cfg.grad_threshold) continue;
        const Gaussian parent = cloud.get(i);
        const double size = parent.scale().maxCoeff();
        if (size <= size_boundary) {
            // Clone. The copy starts with fresh optimizer state, so the pair
            // separates under subsequent updates.
            GaussianCloud one(1, cloud.sh_degree(), cloud.space);
            one.sh.resize(1, cloud.sh.cols());
            one.set(0, parent);
            additions.append(one);
            addition_sources.push_back(i);
            ++out.cloned;
            --budget;
        } else if (budget >= 2) {
            // Split into two children sampled from the parent's density.
            const Mat3 rot = quat_to_matrix<double>(parent.rotation);
            for (int c = 0; c < 2; ++c) {
                Gaussian child = parent;
                const Vec3 xi = rng.normal_vec3();
                child.position =
                    parent.position + rot * (parent.scale().asDiagonal() * xi);
                child.log_scale =
                    parent.log_scale.array() - std::log(cfg.split_scale_shrink);
                GaussianCloud one(1, cloud.sh_degree(), cloud.space);
                one.sh.resize(1, cloud.sh.cols());
                one.set(0, child);
                additions.append(one);
                addition_sources.push_back(i);
            }
            keep[i] = false; // parent replaced by its children
            ++out.split;
            budget -= 2;
        }
    }

    // Assemble: surviving originals in order, then additions in order.
    for (Index i = 0; i < n; ++i) {
        if (keep[i]) {
            out.source_row.push_back(i);
            out.fresh_state.push_back(false);
        }
    }
    for (Index s : addition_sources) {
        out.source_row.push_back(s);
        out.fresh_state.push_back(true);
    }

    cloud.filter(keep);
    if (additions.size() > 0) cloud.append(additions);
    return out;
}

} // namespace hsr
