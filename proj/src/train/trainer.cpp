#include "trip/train/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

#include "trip/autodiff/optim.hpp"
#include "trip/core/rng.hpp"

namespace trip::train {

double lr_at_epoch(double epoch, const TrainConfig& config) {
    if (config.scheduler_step <= 0) return config.lr;
    double steps = std::floor(epoch / double(config.scheduler_step));
    return config.lr * std::pow(config.scheduler_gamma, steps);
}

namespace {

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

struct Phase {
    int index = 1;
    std::set<std::string> frozen;
    std::set<std::string> updated;
    LossWeights weights;
};

// Simultaneous: everything trains. Sequential: phase 1 trains the
// autoencoder without the drag term, phase 2 trains only the drag head.
Phase phase_for(const model::TriplaneVae& model, const TrainConfig& cfg,
                const LossWeights& weights, int epoch) {
    Phase p;
    p.weights = weights;
    const std::vector<std::string>& all = model.params().groups();
    std::vector<std::string> cd = model.cd_group_names();
    std::set<std::string> cd_set(cd.begin(), cd.end());
    if (cfg.regimen == Regimen::Simultaneous) {
        p.updated.insert(all.begin(), all.end());
        return p;
    }
    int phase1 = cfg.phase1_epochs >= 0 ? cfg.phase1_epochs : cfg.epochs / 2;
    if (epoch < phase1) {
        p.index = 1;
        p.weights.w_cd = 0.0;
        p.frozen = cd_set;
        for (const auto& g : all)
            if (!cd_set.count(g)) p.updated.insert(g);
    } else {
        p.index = 2;
        p.updated = cd_set;
        for (const auto& g : all)
            if (!cd_set.count(g)) p.frozen.insert(g);
    }
    return p;
}

void accumulate(LossBreakdown& sum, const LossBreakdown& b) {
    sum.recon += b.recon;
    sum.cd += b.cd;
    sum.kl += b.kl;
    sum.boundary += b.boundary;
    sum.tri += b.tri;
    sum.kl_weight += b.kl_weight;
    sum.total += b.total;
}

LossBreakdown divide(LossBreakdown sum, double n) {
    if (n <= 0) return sum;
    sum.recon /= n;
    sum.cd /= n;
    sum.kl /= n;
    sum.boundary /= n;
    sum.tri /= n;
    sum.kl_weight /= n;
    sum.total /= n;
    return sum;
}

std::string diagnose(const LossBreakdown& b, int epoch, double lr) {
    std::ostringstream os;
    os << "non-finite loss at epoch " << epoch << ", lr " << lr << ": recon=" << b.recon
       << " cd=" << b.cd << " kl=" << b.kl << " boundary=" << b.boundary << " tri=" << b.tri
       << " total=" << b.total;
    return os.str();
}

bool finite(const LossBreakdown& b) {
    return std::isfinite(b.recon) && std::isfinite(b.cd) && std::isfinite(b.kl) &&
           std::isfinite(b.boundary) && std::isfinite(b.tri) && std::isfinite(b.total);
}

std::vector<uint32_t> query_subsample(const ShapeRecord& rec, size_t m, uint64_t seed) {
    size_t q = rec.field_points.size();
    return subsample_indices(q, std::min(m, q), seed);
}

void write_csv_header(std::ofstream& out) {
    out << "epoch,phase,lr,kl_weight,"
        << "train_total,train_recon,train_cd,train_kl,train_boundary,train_tri,"
        << "val_total,val_recon,val_cd,val_kl,val_boundary,val_tri,"
        << "val_cd_mae,val_cd_rmse,val_cd_mape,val_cd_r2,"
        << "val_f1,val_precision,val_recall\n";
}

void write_csv_row(std::ofstream& out, const EpochMetrics& m) {
    out << std::setprecision(10);
    out << m.epoch << ',' << m.phase << ',' << m.lr << ',' << m.kl_weight << ','
        << m.train_mean.total << ',' << m.train_mean.recon << ',' << m.train_mean.cd << ','
        << m.train_mean.kl << ',' << m.train_mean.boundary << ',' << m.train_mean.tri << ','
        << m.val_mean.total << ',' << m.val_mean.recon << ',' << m.val_mean.cd << ','
        << m.val_mean.kl << ',' << m.val_mean.boundary << ',' << m.val_mean.tri << ','
        << m.val_cd.mae << ',' << m.val_cd.rmse << ',' << m.val_cd.mape_percent << ','
        << m.val_cd.r2 << ',' << m.val_f1.f1 << ',' << m.val_f1.precision << ','
        << m.val_f1.recall << '\n';
}

}  // namespace

TrainResult train(model::TriplaneVae& model, Dataset dataset, const Split& split,
                  const TrainConfig& cfg, const LossWeights& weights,
                  const std::string& out_dir) {
    if (split.train.empty()) throw input_error("training split is empty");
    if (split.val.empty()) throw input_error("validation split is empty");
    for (const auto& id : split.train) (void)dataset.at(id);
    for (const auto& id : split.val) (void)dataset.at(id);

    if (cfg.occupancy_mode == OccupancyMode::Binary) binarize_targets(dataset);

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::string csv_path = (fs::path(out_dir) / "metrics.csv").string();
    std::ofstream csv(csv_path);
    if (!csv) throw input_error("cannot write metrics file: " + csv_path);
    write_csv_header(csv);

    ad::AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    opt_cfg.weight_decay = cfg.weight_decay;
    ad::AdamW<float> optimizer(opt_cfg);

    TrainResult result;
    result.metrics_csv = csv_path;
    double best_val = std::numeric_limits<double>::infinity();

    std::vector<std::string> order = split.train;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Phase phase = phase_for(model, cfg, weights, epoch);
        double lr = lr_at_epoch(double(epoch), cfg);

        Rng shuffle_rng(mix_seed(cfg.seed, 0x45504f43ull + uint64_t(epoch)));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.next_u64() % i]);

        LossBreakdown train_sum;
        size_t steps = 0;

        std::unordered_map<std::string, ad::Tensor<float>> grad_acc;
        size_t in_batch = 0;
        auto flush_batch = [&]() {
            if (in_batch == 0) return;
            float inv = 1.0f / float(in_batch);
            for (auto& e : model.params().entries()) {
                if (!phase.updated.count(e.group)) continue;
                auto it = grad_acc.find(e.name);
                if (it == grad_acc.end()) continue;
                for (size_t i = 0; i < it->second.numel(); ++i) it->second[i] *= inv;
                optimizer.update(e.name, e.value, it->second, lr);
            }
            grad_acc.clear();
            in_batch = 0;
        };

        for (const std::string& id : order) {
            const ShapeRecord& rec = dataset.at(id);
            uint64_t shape_key = mix_seed(mix_seed(cfg.seed, uint64_t(epoch)), fnv1a(id));
            std::vector<uint32_t> idx =
                query_subsample(rec, cfg.m_queries, mix_seed(shape_key, 0x51554552ull));

            ad::Tape<float> tape;
            auto bound = model.bind(tape, phase.frozen);
            StepOutput<float> step = shape_loss(model, bound, rec, idx, phase.weights,
                                                double(epoch), true,
                                                mix_seed(shape_key, 0x464f5257ull));
            if (!finite(step.breakdown))
                throw internal_error(diagnose(step.breakdown, epoch, lr));
            tape.backward(step.total);

            for (const auto& e : model.params().entries()) {
                if (!phase.updated.count(e.group)) continue;
                ad::Tensor<float> g = bound.grad_of(e.name);
                auto it = grad_acc.find(e.name);
                if (it == grad_acc.end()) {
                    grad_acc.emplace(e.name, std::move(g));
                } else {
                    for (size_t i = 0; i < g.numel(); ++i) it->second[i] += g[i];
                }
            }
            ++in_batch;
            if (int(in_batch) >= std::max(1, cfg.batch_size)) flush_batch();

            accumulate(train_sum, step.breakdown);
            ++steps;
        }
        flush_batch();

        EpochMetrics em;
        em.epoch = epoch;
        em.phase = phase.index;
        em.lr = lr;
        em.kl_weight = kl_weight_at(double(epoch), weights);
        em.train_mean = divide(train_sum, double(steps));

        LossBreakdown val_sum;
        std::vector<double> cd_pred, cd_true;
        std::vector<float> occ_pred, occ_true;
        for (const std::string& id : split.val) {
            const ShapeRecord& rec = dataset.at(id);
            std::vector<uint32_t> idx = query_subsample(
                rec, cfg.val_queries, mix_seed(mix_seed(cfg.seed, 0x56414cull), fnv1a(id)));
            ad::Tape<float> tape;
            auto bound = model.bind(tape);
            StepOutput<float> step = shape_loss(model, bound, rec, idx, phase.weights,
                                                double(epoch), false, 0);
            accumulate(val_sum, step.breakdown);
            cd_pred.push_back(double(step.forward.cd.val().scalar_value()));
            cd_true.push_back(double(rec.cd));
            for (size_t k = 0; k < idx.size(); ++k) {
                occ_pred.push_back(step.forward.occupancy.val()[k]);
                occ_true.push_back(float(step.occ_true[k]));
            }
        }
        em.val_mean = divide(val_sum, double(split.val.size()));
        em.val_cd = eval::regression_metrics(cd_pred, cd_true);
        em.val_f1 = eval::f1_inside(occ_pred, occ_true);

        write_csv_row(csv, em);
        csv.flush();

        std::ostringstream name;
        name << "epoch_" << std::setw(3) << std::setfill('0') << epoch + 1 << ".trip";
        std::string ckpt = (fs::path(out_dir) / name.str()).string();
        model.save(ckpt);

        if (em.val_mean.total < best_val) {
            best_val = em.val_mean.total;
            result.best_epoch = epoch;
            result.best_checkpoint = (fs::path(out_dir) / "best.trip").string();
            model.save(result.best_checkpoint);
        }
        result.epochs.push_back(em);
    }
    return result;
}

}  // namespace trip::train
