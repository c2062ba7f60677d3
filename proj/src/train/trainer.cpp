#include "hsr/train/trainer.hpp"

#include "hsr/error.hpp"

#include <chrono>
#include <cmath>

namespace hsr {

void TrainConfig::validate() const {
    if (iterations < 1) throw PreconditionError("TrainConfig: iterations must be >= 1");
    loss.validate();
    if (density.interval < 0 || density.grad_threshold < 0 || density.prune_opacity < 0)
        throw PreconditionError("TrainConfig: density thresholds must be >= 0");
    if (critique_max_rounds < 1)
        throw PreconditionError("TrainConfig: critique_max_rounds must be >= 1");
    if (trainable_range && density.interval > 0)
        throw PreconditionError(
            "TrainConfig: a trainable row range requires density control to be off "
            "(densification renumbers rows)");
    if (enhance_outer_e < 1 || enhance_inner_t < 1)
        throw PreconditionError("TrainConfig: enhancement loop sizes must be >= 1");
}

namespace {

void ensure_mlp_states(const MlpDecoder& dec, std::vector<AdamState>& w_states,
                       std::vector<AdamState>& b_states) {
    if (w_states.size() != dec.weights.size()) {
        w_states.clear();
        b_states.clear();
        for (int l = 0; l < dec.n_layers(); ++l) {
            w_states.push_back(AdamState::zero(dec.weights[l].rows(), dec.weights[l].cols()));
            b_states.push_back(AdamState::zero(dec.biases[l].size(), 1));
        }
    }
}

double position_lr(const LearningRates& lr, std::int64_t step, std::int64_t horizon) {
    const double t =
        std::clamp(static_cast<double>(step) / std::max<double>(1.0, static_cast<double>(horizon)),
                   0.0, 1.0);
    return lr.position * std::pow(lr.position_final / lr.position, t);
}

} // namespace

void TrainState::ensure_shapes(const Reconstruction& rec) {
    const Index n = rec.cloud.size();
    const int shd = rec.cloud.sh_dim();
    if (!positions.matches(n, 3)) positions = AdamState::zero(n, 3);
    if (!rotations.matches(n, 4)) rotations = AdamState::zero(n, 4);
    if (!log_scales.matches(n, 3)) log_scales = AdamState::zero(n, 3);
    if (!opacity.matches(n, 1)) opacity = AdamState::zero(n, 1);
    if (!sh.matches(n, shd)) sh = AdamState::zero(n, shd);
    if (densify_acc.size() != n) densify_acc.resize(n);
    if (rec.human && rec.human->model) {
        const DeformationModel& model = *rec.human->model;
        ensure_mlp_states(model.nonrigid, nonrigid_w, nonrigid_b);
        ensure_mlp_states(model.lbs_offset, lbs_w, lbs_b);
        ensure_mlp_states(model.color, color_w, color_b);
        for (int p = 0; p < 3; ++p) {
            if (!planes[p].matches(model.triplane.plane(p).rows(),
                                   model.triplane.plane(p).cols()))
                planes[p] = AdamState::zero(model.triplane.plane(p).rows(),
                                            model.triplane.plane(p).cols());
        }
    }
}

namespace {

// Remap per-row optimizer state through a density event; fresh rows restart
// from zero moments.
void remap_rows(AdamState& st, const DensityOutcome& outcome, Index cols) {
    AdamState next = AdamState::zero(static_cast<Index>(outcome.source_row.size()), cols);
    next.step = st.step;
    next.skipped = st.skipped;
    for (size_t r = 0; r < outcome.source_row.size(); ++r) {
        if (outcome.fresh_state[r]) continue;
        next.m.row(static_cast<Index>(r)) = st.m.row(outcome.source_row[r]);
        next.v.row(static_cast<Index>(r)) = st.v.row(outcome.source_row[r]);
    }
    st = std::move(next);
}

MatX remap_matrix_rows(const MatX& m, const std::vector<Index>& source) {
    MatX next = MatX::Zero(static_cast<Index>(source.size()), m.cols());
    for (size_t r = 0; r < source.size(); ++r)
        next.row(static_cast<Index>(r)) = m.row(source[r]);
    return next;
}

} // namespace

TrainReport train(Reconstruction& rec, TrainState& state, const std::vector<TrainView>& views,
                  const TrainConfig& cfg) {
    cfg.validate();
    rec.cloud.validate();
    if (views.empty()) throw PreconditionError("train: need at least one view");
    const int width = views.front().camera.width, height = views.front().camera.height;
    for (const TrainView& v : views) {
        if (v.image.width() != width || v.image.height() != height ||
            v.camera.width != width || v.camera.height != height)
            throw PreconditionError("train: views must share one resolution");
        if (v.pose && !rec.human)
            throw PreconditionError("train: posed view without an articulation model");
    }
    if (cfg.region_set) cfg.region_set->validate(width, height);
    state.ensure_shapes(rec);

    const auto t_start = std::chrono::steady_clock::now();
    Rng rng(cfg.seed);
    PyramidPerceptual pyramid;
    const PerceptualBackend* backend = cfg.use_perceptual ? &pyramid : nullptr;
    const AdamConfig adam_cfg;

    TrainReport report;
    report.loss_series.reserve(cfg.iterations);
    int consecutive_bad = 0;
    GaussianCloud frozen_snapshot;
    if (cfg.trainable_range) frozen_snapshot = rec.cloud;

    const auto freeze_rows = [&](CloudGrads& grads) {
        if (!cfg.trainable_range) return;
        const auto [lo, hi] = *cfg.trainable_range;
        for (Index i = 0; i < rec.cloud.size(); ++i) {
            if (i >= lo && i < hi) continue;
            grads.d_positions.row(i).setZero();
            grads.d_rotations.row(i).setZero();
            grads.d_log_scales.row(i).setZero();
            grads.d_opacity_logits[i] = 0.0;
            grads.d_sh.row(i).setZero();
        }
    };

    for (int it = 0; it < cfg.iterations; ++it) {
        const TrainView& view = views[rng.uniform_int(views.size())];
        const bool articulated = rec.human && view.pose;

        DeformCache dcache;
        GaussianCloud posed;
        const GaussianCloud* render_cloud = &rec.cloud;
        if (articulated) {
            posed = deform_cloud(rec.cloud, *rec.human, *view.pose, &dcache);
            render_cloud = &posed;
        }

        RenderCache rcache;
        const RenderOutput out =
            render(*render_cloud, view.camera, cfg.background, cfg.render, &rcache);

        LossGrads lgrads;
        const GrayImage* mask =
            (cfg.use_mask_loss && view.mask) ? &view.mask.value() : nullptr;
        const RegionSet* regions = cfg.region_set ? &cfg.region_set.value() : nullptr;
        const ImageLossResult loss = image_loss(out.color, out.alpha, view.image, mask,
                                                cfg.loss, backend, regions, &lgrads);

        report.loss_series.push_back(loss.total);
        if (!std::isfinite(loss.total)) {
            if (++consecutive_bad >= cfg.divergence_limit)
                throw DivergenceError("train: loss non-finite for " +
                                      std::to_string(consecutive_bad) +
                                      " consecutive steps at iteration " + std::to_string(it));
        } else {
            consecutive_bad = 0;
        }

        CloudGrads grads =
            render_backward(*render_cloud, view.camera, lgrads.d_color, lgrads.d_alpha, rcache);

        // Screen-gradient statistics for density control (visible splats only).
        for (Index i = 0; i < rec.cloud.size(); ++i) {
            if (rcache.splats[i].culled) continue;
            state.densify_acc.sum[i] += grads.screen_grad_norm[i];
            state.densify_acc.count[i] += 1.0;
        }

        const double pos_lr = position_lr(cfg.lr, state.iteration, cfg.iterations);
        bool applied = true;
        if (articulated) {
            const DeformGrads dg =
                deform_backward(rec.cloud, *rec.human, dcache, grads.d_positions,
                                grads.d_rotations, grads.d_log_scales, grads.d_opacity_logits,
                                grads.d_sh);
            CloudGrads canonical = grads;
            canonical.d_positions = dg.d_positions;
            canonical.d_rotations = dg.d_rotations;
            canonical.d_log_scales = dg.d_log_scales;
            canonical.d_opacity_logits = dg.d_opacity_logits;
            canonical.d_sh = dg.d_sh;
            freeze_rows(canonical);

            applied &= adam_step(rec.cloud.positions, canonical.d_positions, state.positions,
                                 pos_lr, adam_cfg);
            applied &= adam_step(rec.cloud.rotations, canonical.d_rotations, state.rotations,
                                 cfg.lr.rotation, adam_cfg);
            applied &= adam_step(rec.cloud.log_scales, canonical.d_log_scales, state.log_scales,
                                 cfg.lr.scale, adam_cfg);
            applied &= adam_step(rec.cloud.opacity_logits, canonical.d_opacity_logits,
                                 state.opacity, cfg.lr.opacity, adam_cfg);
            applied &= adam_step(rec.cloud.sh, canonical.d_sh, state.sh, cfg.lr.sh, adam_cfg);

            if (rec.human->model) {
                DeformationModel& model = *rec.human->model;
                for (int l = 0; l < model.nonrigid.n_layers(); ++l) {
                    applied &= adam_step(model.nonrigid.weights[l], dg.d_nonrigid.d_weights[l],
                                         state.nonrigid_w[l], cfg.lr.decoder, adam_cfg);
                    applied &= adam_step(model.nonrigid.biases[l], dg.d_nonrigid.d_biases[l],
                                         state.nonrigid_b[l], cfg.lr.decoder, adam_cfg);
                }
                for (int l = 0; l < model.lbs_offset.n_layers(); ++l) {
                    applied &= adam_step(model.lbs_offset.weights[l], dg.d_lbs_offset.d_weights[l],
                                         state.lbs_w[l], cfg.lr.decoder, adam_cfg);
                    applied &= adam_step(model.lbs_offset.biases[l], dg.d_lbs_offset.d_biases[l],
                                         state.lbs_b[l], cfg.lr.decoder, adam_cfg);
                }
                if (model.use_color_decoder) {
                    for (int l = 0; l < model.color.n_layers(); ++l) {
                        applied &= adam_step(model.color.weights[l], dg.d_color.d_weights[l],
                                             state.color_w[l], cfg.lr.decoder, adam_cfg);
                        applied &= adam_step(model.color.biases[l], dg.d_color.d_biases[l],
                                             state.color_b[l], cfg.lr.decoder, adam_cfg);
                    }
                }
                for (int p = 0; p < 3; ++p)
                    applied &= adam_step(model.triplane.plane(p), dg.d_planes[p],
                                         state.planes[p], cfg.lr.decoder, adam_cfg);
            }
        } else {
            freeze_rows(grads);
            applied &= adam_step(rec.cloud.positions, grads.d_positions, state.positions, pos_lr,
                                 adam_cfg);
            applied &= adam_step(rec.cloud.rotations, grads.d_rotations, state.rotations,
                                 cfg.lr.rotation, adam_cfg);
            applied &= adam_step(rec.cloud.log_scales, grads.d_log_scales, state.log_scales,
                                 cfg.lr.scale, adam_cfg);
            applied &= adam_step(rec.cloud.opacity_logits, grads.d_opacity_logits, state.opacity,
                                 cfg.lr.opacity, adam_cfg);
            applied &= adam_step(rec.cloud.sh, grads.d_sh, state.sh, cfg.lr.sh, adam_cfg);
        }
        if (!applied) ++state.skipped_steps;
        if (cfg.trainable_range) {
            // Zeroed gradients keep moments at rest only if they started
            // there; restoring the rows makes freezing unconditional.
            const auto [lo, hi] = *cfg.trainable_range;
            for (Index i = 0; i < rec.cloud.size(); ++i) {
                if (i >= lo && i < hi) continue;
                rec.cloud.positions.row(i) = frozen_snapshot.positions.row(i);
                rec.cloud.rotations.row(i) = frozen_snapshot.rotations.row(i);
                rec.cloud.log_scales.row(i) = frozen_snapshot.log_scales.row(i);
                rec.cloud.opacity_logits[i] = frozen_snapshot.opacity_logits[i];
                rec.cloud.sh.row(i) = frozen_snapshot.sh.row(i);
            }
        }
        rec.cloud.normalize_rotations();
        ++state.iteration;

        // Density control.
        const bool densify_window =
            cfg.density.interval > 0 &&
            it < static_cast<int>(cfg.density.until_fraction * cfg.iterations);
        if (densify_window && (it + 1) % cfg.density.interval == 0) {
            Vec3 lo, hi;
            rec.cloud.bounding_box(lo, hi);
            const double extent = std::max((hi - lo).norm(), 1e-6);
            const DensityOutcome outcome =
                densify_and_prune(rec.cloud, state.densify_acc, cfg.density, extent, rng);
            remap_rows(state.positions, outcome, 3);
            remap_rows(state.rotations, outcome, 4);
            remap_rows(state.log_scales, outcome, 3);
            remap_rows(state.opacity, outcome, 1);
            remap_rows(state.sh, outcome, rec.cloud.sh_dim());
            if (rec.human) {
                rec.human->weights.base_weights =
                    remap_matrix_rows(rec.human->weights.base_weights, outcome.source_row);
                rec.human->weights.learned_logit_offsets = remap_matrix_rows(
                    rec.human->weights.learned_logit_offsets, outcome.source_row);
            }
            state.densify_acc.resize(rec.cloud.size());
            ++report.densify_events;
        }

        if (cfg.log_interval > 0 && (it % cfg.log_interval == 0 || it + 1 == cfg.iterations)) {
            LossBreakdownEntry entry;
            entry.iteration = state.iteration;
            entry.total = loss.total;
            entry.l1 = loss.breakdown.l1;
            entry.mask = loss.breakdown.mask;
            entry.ssim = loss.breakdown.ssim_term;
            entry.perceptual = loss.breakdown.perceptual;
            entry.region = loss.region_term;
            entry.n_gaussians = rec.cloud.size();
            report.series.push_back(entry);
        }
    }

    report.final_gaussians = rec.cloud.size();
    report.skipped_steps = state.skipped_steps;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

EvalReport evaluate(const Reconstruction& rec, const std::vector<TrainView>& views,
                    const RenderOptions& render_opts, const Vec3& background,
                    const PerceptualBackend* backend) {
    if (views.empty()) throw PreconditionError("evaluate: need at least one view");
    std::vector<ViewMetrics> rows;
    rows.reserve(views.size());
    for (const TrainView& v : views) {
        const GaussianCloud* cloud = &rec.cloud;
        GaussianCloud posed;
        if (rec.human && v.pose) {
            posed = deform_cloud(rec.cloud, *rec.human, *v.pose);
            cloud = &posed;
        }
        const RenderOutput out = render(*cloud, v.camera, background, render_opts);
        ViewMetrics m;
        m.psnr = psnr(out.color, v.image);
        m.ssim = ssim(out.color, v.image);
        m.perceptual = backend ? backend->value(out.color, v.image) : 0.0;
        rows.push_back(m);
    }
    return make_eval_report(std::move(rows));
}

} // namespace hsr
