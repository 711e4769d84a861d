#include "trip/eval/evaluate.hpp"

#include <fstream>
#include <iomanip>
#include <set>

#include "trip/core/error.hpp"

namespace trip::eval {

namespace {

constexpr size_t kQueryChunk = 65536;

}  // namespace

EvaluationReport summarize_evaluation(std::vector<ShapeEvaluation> rows) {
    if (rows.empty()) throw input_error("evaluation needs at least one shape");
    EvaluationReport report;
    std::vector<double> pred, truth;
    pred.reserve(rows.size());
    truth.reserve(rows.size());
    for (const auto& r : rows) {
        pred.push_back(r.cd_pred);
        truth.push_back(r.cd_true);
        report.mean_f1 += r.f1;
        report.mean_precision += r.precision;
        report.mean_recall += r.recall;
    }
    report.cd = regression_metrics(pred, truth);
    report.mean_f1 /= double(rows.size());
    report.mean_precision /= double(rows.size());
    report.mean_recall /= double(rows.size());
    report.shapes = std::move(rows);
    return report;
}

EvaluationReport evaluate_model(const model::TriplaneVae& net, const train::Dataset& dataset,
                                const std::vector<std::string>& ids) {
    if (ids.empty()) throw input_error("evaluation needs at least one shape");
    std::set<std::string> frozen;
    for (const auto& g : net.params().groups()) frozen.insert(g);

    std::vector<ShapeEvaluation> rows;
    rows.reserve(ids.size());
    for (const auto& id : ids) {
        const train::ShapeRecord& rec = dataset.at(id);
        ShapeEvaluation row;
        row.shape_id = id;
        row.cd_true = double(rec.cd);

        ad::Tensor<float> z_val;
        std::array<ad::Tensor<float>, 3> plane_vals;
        {
            ad::Tape<float> tape;
            auto b = net.bind(tape, frozen);
            auto [mu, logvar] = net.encode(b, rec.cloud, nullptr, false);
            (void)logvar;
            row.cd_pred = double(net.cd_head(b, mu).val()[0]);
            auto planes = net.decode_triplanes(b, mu);
            for (int k = 0; k < 3; ++k) plane_vals[size_t(k)] = planes[size_t(k)].val();
        }

        std::vector<float> occ_pred;
        occ_pred.reserve(rec.field_points.size());
        for (size_t base = 0; base < rec.field_points.size(); base += kQueryChunk) {
            size_t end = std::min(rec.field_points.size(), base + kQueryChunk);
            std::vector<Vec3> chunk(rec.field_points.begin() + long(base),
                                    rec.field_points.begin() + long(end));
            ad::Tape<float> tape;
            auto b = net.bind(tape, frozen);
            std::array<ad::Var<float>, 3> planes = {tape.leaf(plane_vals[0], false),
                                                    tape.leaf(plane_vals[1], false),
                                                    tape.leaf(plane_vals[2], false)};
            ad::Var<float> occ = net.occupancy_head(b, net.sample_triplane_features(planes, chunk));
            const ad::Tensor<float>& v = occ.val();
            for (size_t i = 0; i < v.numel(); ++i) occ_pred.push_back(v[i]);
        }

        F1Report f1 = f1_inside(occ_pred, rec.field_occupancy, 0.5);
        row.f1 = f1.f1;
        row.precision = f1.precision;
        row.recall = f1.recall;
        rows.push_back(std::move(row));
    }
    return summarize_evaluation(std::move(rows));
}

void save_evaluation_csv(const std::string& path, const EvaluationReport& report) {
    std::ofstream out(path);
    if (!out) throw input_error("cannot open " + path + " for writing");
    out << "shape_id,cd_true,cd_pred,f1,precision,recall\n" << std::setprecision(17);
    for (const auto& r : report.shapes)
        out << r.shape_id << ',' << r.cd_true << ',' << r.cd_pred << ',' << r.f1 << ','
            << r.precision << ',' << r.recall << '\n';
    out.flush();
    if (!out) throw input_error("write failed: " + path);
}

}  // namespace trip::eval
