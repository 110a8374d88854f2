#include "dmtrack/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <string>
#include <utility>

#include "dmtrack/checkpoint.hpp"
#include "dmtrack/errors.hpp"
#include "dmtrack/mot_io.hpp"

namespace dmtrack {

namespace {

Tensor row_from_state(const MotionState& s) {
    return Tensor::row({s.x, s.y, s.a, s.h, s.vx, s.vy, s.va, s.vh});
}

std::vector<std::pair<std::string, Tensor>> joint_named_parameters(const DeformMamba& model,
                                                                   const MotionGate& gate) {
    auto named = model.named_parameters();
    auto gate_named = gate.named_parameters();
    named.insert(named.end(), gate_named.begin(), gate_named.end());
    return named;
}

double global_grad_norm(const std::vector<Tensor>& params) {
    double sum = 0.0;
    for (const Tensor& p : params) {
        for (const double g : p.grad()) sum += g * g;
    }
    return std::sqrt(sum);
}

void scale_grads(std::vector<Tensor>& params, double factor) {
    for (Tensor& p : params) {
        for (double& g : p.grad_mut()) g *= factor;
    }
}

std::vector<std::vector<double>> snapshot_values(const std::vector<Tensor>& params) {
    std::vector<std::vector<double>> out;
    out.reserve(params.size());
    for (const Tensor& p : params) out.emplace_back(p.values().begin(), p.values().end());
    return out;
}

void restore_values(std::vector<Tensor>& params, const std::vector<std::vector<double>>& snap) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::copy(snap[i].begin(), snap[i].end(), params[i].values_mut().begin());
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (!(lr > 0.0)) {
        throw DomainError("train config: lr must be positive, got " + std::to_string(lr));
    }
    if (batch < 1) {
        throw DomainError("train config: batch must be >= 1, got " + std::to_string(batch));
    }
    if (epochs < 1) {
        throw DomainError("train config: epochs must be >= 1, got " + std::to_string(epochs));
    }
    if (warmup_epochs < 0) {
        throw DomainError("train config: warmup_epochs must be >= 0, got " +
                          std::to_string(warmup_epochs));
    }
    if (lambda1 < 0.0 || lambda2 < 0.0) {
        throw DomainError("train config: loss weights must be >= 0");
    }
    if (clip_norm < 0.0) {
        throw DomainError("train config: clip_norm must be >= 0, got " +
                          std::to_string(clip_norm));
    }
    if (weight_decay < 0.0) {
        throw DomainError("train config: weight_decay must be >= 0, got " +
                          std::to_string(weight_decay));
    }
}

std::vector<TrainingSample> build_windows(const std::vector<SyntheticSequence>& sequences,
                                          WindowBuildStats* stats) {
    constexpr int kRunMin = kWindowLen + 1;
    std::vector<TrainingSample> samples;
    WindowBuildStats local;

    for (const SyntheticSequence& seq : sequences) {
        std::map<int, MotSequence> by_id;
        for (const MotRow& row : seq.gt) by_id[row.id].push_back(row);

        for (auto& [id, rows] : by_id) {
            std::sort(rows.begin(), rows.end(),
                      [](const MotRow& a, const MotRow& b) { return a.frame < b.frame; });

            // Kalman prior for the frame after each observed one, filtering the
            // whole track and coasting on predictions across gaps.
            KalmanFilter filter;
            KalmanTrackState state;
            std::map<int, std::pair<Vec8, Vec8>> prior_after;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                const Vec4 box = rows[i].to_cxcyah();
                if (i == 0) {
                    state = filter.initiate(box);
                } else {
                    for (int k = rows[i - 1].frame; k < rows[i].frame; ++k) {
                        state = filter.predict(state);
                    }
                    state = filter.update(state, box);
                }
                const KalmanTrackState next = filter.predict(state);
                prior_after[rows[i].frame] = {next.mean, KalmanFilter::sigma_diag(next)};
            }

            // Contiguous runs with run-local finite-difference velocities.
            const std::size_t before = samples.size();
            std::vector<MotionState> run;
            std::vector<int> run_frames;
            const auto flush = [&]() {
                if (static_cast<int>(run.size()) >= kRunMin) {
                    for (std::size_t start = 0; start + kWindowLen < run.size(); ++start) {
                        TrainingSample sample;
                        sample.window = TrajectoryWindow::from_history(
                            {run.begin() + static_cast<std::ptrdiff_t>(start),
                             run.begin() + static_cast<std::ptrdiff_t>(start + kWindowLen)});
                        sample.target = run[start + kWindowLen];
                        const auto& prior = prior_after.at(run_frames[start + kWindowLen - 1]);
                        sample.x_kal = prior.first;
                        sample.sigma_kal = prior.second;
                        samples.push_back(std::move(sample));
                    }
                }
                run.clear();
                run_frames.clear();
            };
            for (const MotRow& row : rows) {
                if (!run_frames.empty() && row.frame != run_frames.back() + 1) flush();
                const Vec4 box = row.to_cxcyah();
                MotionState s;
                s.x = box(0);
                s.y = box(1);
                s.a = box(2);
                s.h = box(3);
                if (!run.empty()) {
                    const MotionState& prev = run.back();
                    s.vx = s.x - prev.x;
                    s.vy = s.y - prev.y;
                    s.va = s.a - prev.a;
                    s.vh = s.h - prev.h;
                }
                run.push_back(s);
                run_frames.push_back(row.frame);
            }
            flush();
            if (samples.size() > before) {
                local.tracks_used += 1;
            } else {
                local.tracks_skipped += 1;
            }
        }
    }
    local.samples = samples.size();
    if (stats != nullptr) *stats = local;
    return samples;
}

double loss_state(const Vec8& x_pred, const Vec8& x_gt) {
    return (x_pred - x_gt).cwiseAbs().sum();
}

double loss_conf(const Vec8& x, const Vec8& x_gt, const Vec8& sigma) {
    double total = 0.0;
    for (int i = 0; i < 8; ++i) {
        if (!(sigma(i) > 0.0)) {
            throw DomainError("loss_conf: sigma must be positive, got " +
                              std::to_string(sigma(i)) + " at dim " + std::to_string(i));
        }
        const double err = x(i) - x_gt(i);
        total += 0.5 * err * err / (sigma(i) * sigma(i)) + std::log(sigma(i));
    }
    return total;
}

double loss_total(double l_state, double l_conf, const TrainConfig& config) {
    return config.lambda1 * l_state + config.lambda2 * l_conf;
}

Tensor loss_state(Tape& tape, const Tensor& x_pred, const Tensor& x_gt) {
    return sum(tape, abs_(tape, sub(tape, x_pred, x_gt)));
}

Tensor loss_conf(Tape& tape, const Tensor& x, const Tensor& x_gt, const Tensor& sigma) {
    const Tensor err = sub(tape, x, x_gt);
    const Tensor quad = mul_scalar(
        tape, div(tape, mul(tape, err, err), mul(tape, sigma, sigma)), 0.5);
    return sum(tape, add(tape, quad, log_(tape, sigma)));
}

Tensor loss_total(Tape& tape, const Tensor& l_state, const Tensor& l_conf,
                  const TrainConfig& config) {
    return add(tape, mul_scalar(tape, l_state, config.lambda1),
               mul_scalar(tape, l_conf, config.lambda2));
}

double warmup_lr(const TrainConfig& config, long step, long steps_per_epoch) {
    const long warmup_steps = static_cast<long>(config.warmup_epochs) * steps_per_epoch;
    if (warmup_steps > 0 && step <= warmup_steps) {
        return config.lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    }
    return config.lr;
}

TrainResult train(const std::vector<TrainingSample>& samples, const TrainConfig& config) {
    config.validate();
    Rng model_rng = derive_stream(config.seed, "model-init");
    const DeformMamba model = DeformMamba::init(model_rng);
    Rng gate_rng = derive_stream(config.seed, "gate-init");
    const MotionGate gate = MotionGate::init(gate_rng);
    return train(samples, config, model, gate);
}

TrainResult train(const std::vector<TrainingSample>& samples, const TrainConfig& config,
                  const DeformMamba& start_model, const MotionGate& start_gate) {
    config.validate();
    if (samples.empty()) throw DataError("training: sample set is empty");

    TrainResult result;
    result.model = start_model.clone();
    result.gate = start_gate.clone();

    std::vector<Tensor> params = result.model.parameters();
    {
        const std::vector<Tensor> gate_params = result.gate.parameters();
        params.insert(params.end(), gate_params.begin(), gate_params.end());
    }
    AdamWConfig opt_config;
    opt_config.lr = config.lr;
    opt_config.weight_decay = config.weight_decay;
    AdamW optimizer(params, opt_config);

    const std::size_t n = samples.size();
    const long steps_per_epoch =
        static_cast<long>((n + static_cast<std::size_t>(config.batch) - 1) /
                          static_cast<std::size_t>(config.batch));
    Rng shuffle_rng = derive_stream(config.seed, "shuffle");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::vector<std::vector<double>> last_good = snapshot_values(params);
    long global_step = 0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = shuffle_rng.below(i);
            std::swap(order[i - 1], order[j]);
        }

        double sum_state = 0.0, sum_conf = 0.0, sum_total = 0.0;
        bool finite = true;

        for (std::size_t offset = 0; offset < n && finite;
             offset += static_cast<std::size_t>(config.batch)) {
            const std::size_t batch_end = std::min(n, offset + static_cast<std::size_t>(config.batch));
            const double batch_size = static_cast<double>(batch_end - offset);

            for (Tensor& p : params) p.zero_grad();
            Tape tape(true);
            Tensor batch_total;
            bool have_total = false;

            for (std::size_t k = offset; k < batch_end; ++k) {
                const TrainingSample& sample = samples[order[k]];
                const GatedPrediction pred = gated_forward(
                    tape, result.model, result.gate, sample.window, sample.x_kal,
                    sample.sigma_kal);
                const Tensor gt = row_from_state(sample.target);

                Tensor l_state;
                switch (config.state_loss_target) {
                    case StateLossTarget::Fused:
                        l_state = loss_state(tape, pred.x_fuse, gt);
                        break;
                    case StateLossTarget::Mamba:
                        l_state = loss_state(tape, pred.x_mam, gt);
                        break;
                    case StateLossTarget::Both:
                        l_state = add(tape, loss_state(tape, pred.x_fuse, gt),
                                      loss_state(tape, pred.x_mam, gt));
                        break;
                }
                const Tensor l_conf = loss_conf(tape, pred.x_fuse, gt, pred.sigma_fuse);
                const Tensor l_total = loss_total(tape, l_state, l_conf, config);

                sum_state += l_state.at(0, 0);
                sum_conf += l_conf.at(0, 0);
                sum_total += l_total.at(0, 0);

                batch_total = have_total ? add(tape, batch_total, l_total) : l_total;
                have_total = true;
            }

            const Tensor batch_loss = mul_scalar(tape, batch_total, 1.0 / batch_size);
            if (!std::isfinite(batch_loss.at(0, 0))) {
                finite = false;
                break;
            }

            tape.backward(batch_loss);
            if (config.clip_norm > 0.0) {
                const double norm = global_grad_norm(params);
                if (norm > config.clip_norm) scale_grads(params, config.clip_norm / norm);
            }
            optimizer.set_lr(warmup_lr(config, global_step + 1, steps_per_epoch));
            optimizer.step();
            ++global_step;
        }

        if (!finite) {
            restore_values(params, last_good);
            result.diverged = true;
            break;
        }
        const double dn = static_cast<double>(n);
        result.curve.push_back({epoch, sum_state / dn, sum_conf / dn, sum_total / dn});
        last_good = snapshot_values(params);
    }

    result.steps = global_step;
    return result;
}

void write_loss_curve(const std::string& path, const std::vector<EpochStats>& curve) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (f == nullptr) throw DataError(path + ": cannot open for writing");
    std::fputs("epoch,mean_state_loss,mean_conf_loss,mean_total\n", f);
    for (const EpochStats& row : curve) {
        std::fprintf(f, "%d,%.17g,%.17g,%.17g\n", row.epoch, row.mean_state_loss,
                     row.mean_conf_loss, row.mean_total);
    }
    if (std::fclose(f) != 0) throw DataError(path + ": write failed");
}

void save_training_checkpoint(const std::string& path, const DeformMamba& model,
                              const MotionGate& gate, const AdamW* optimizer, long step) {
    std::vector<std::pair<std::string, Tensor>> records = joint_named_parameters(model, gate);
    if (optimizer != nullptr) {
        const std::size_t count = records.size();
        const auto m = optimizer->first_moments();
        const auto v = optimizer->second_moments();
        if (m.size() != count) {
            throw DomainError("training checkpoint: optimizer tracks " + std::to_string(m.size()) +
                              " tensors, model has " + std::to_string(count));
        }
        records.reserve(3 * count + 1);
        for (std::size_t i = 0; i < count; ++i) {
            const std::string name = records[i].first;
            const Shape shape = records[i].second.shape();
            records.emplace_back("adamw.m." + name, Tensor::from(shape, {m[i].begin(), m[i].end()}));
            records.emplace_back("adamw.v." + name, Tensor::from(shape, {v[i].begin(), v[i].end()}));
        }
        records.emplace_back("trainer.step", Tensor::scalar(static_cast<double>(step)));
    }
    save_checkpoint(path, records);
}

long load_training_checkpoint(const std::string& path, DeformMamba& model, MotionGate& gate,
                              AdamW* optimizer) {
    const auto named = joint_named_parameters(model, gate);
    load_checkpoint_into(path, named);
    long step = 0;
    if (optimizer != nullptr) {
        std::map<std::string, Tensor> stored;
        for (auto& [name, tensor] : load_checkpoint(path)) stored.emplace(name, tensor);
        for (std::size_t i = 0; i < named.size(); ++i) {
            const auto mit = stored.find("adamw.m." + named[i].first);
            const auto vit = stored.find("adamw.v." + named[i].first);
            if (mit == stored.end() || vit == stored.end()) continue;
            const auto& mv = mit->second.values();
            const auto& vv = vit->second.values();
            if (mv.size() != optimizer->first_moment_mut(i).size()) {
                throw DataError(path + ": optimizer moment size mismatch for " + named[i].first);
            }
            std::copy(mv.begin(), mv.end(), optimizer->first_moment_mut(i).begin());
            std::copy(vv.begin(), vv.end(), optimizer->second_moment_mut(i).begin());
        }
        const auto sit = stored.find("trainer.step");
        if (sit != stored.end()) {
            step = static_cast<long>(sit->second.at(0, 0));
            optimizer->set_step_count(step);
        }
    }
    return step;
}

PredictionMetrics evaluate_prediction(const DeformMamba& model, const MotionGate& gate,
                                      const std::vector<TrainingSample>& samples) {
    PredictionMetrics metrics;
    double sum_fused = 0.0, sum_kal = 0.0;
    for (const TrainingSample& sample : samples) {
        Tape tape(false);
        const GatedPrediction pred = gated_forward(tape, model, gate, sample.window,
                                                   sample.x_kal, sample.sigma_kal);
        const double fx = pred.x_fuse.at(0, 0) - sample.target.x;
        const double fy = pred.x_fuse.at(0, 1) - sample.target.y;
        sum_fused += std::hypot(fx, fy);
        const double kx = sample.x_kal(0) - sample.target.x;
        const double ky = sample.x_kal(1) - sample.target.y;
        sum_kal += std::hypot(kx, ky);
    }
    metrics.count = samples.size();
    if (!samples.empty()) {
        const double dn = static_cast<double>(samples.size());
        metrics.ade_fused = sum_fused / dn;
        metrics.fde_fused = metrics.ade_fused;
        metrics.ade_kalman = sum_kal / dn;
        metrics.fde_kalman = metrics.ade_kalman;
    }
    return metrics;
}

}  // namespace dmtrack
