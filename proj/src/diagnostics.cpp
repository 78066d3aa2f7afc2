#include "dda/diagnostics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "dda/errors.hpp"
#include "dda/rng.hpp"

namespace dda {

namespace {

constexpr std::uint64_t kPcaStartSeed = 0x5043415374617274ULL;
constexpr int kMaxIterations = 5000;
constexpr double kResidualTolerance = 1e-11;

void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
    const double scale = v.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(v(i)) > 1e-9 * scale) {
            if (v(i) < 0.0) v = -v;
            return;
        }
    }
}

Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& m) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    return qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols());
}

std::string fmt(double v, const char* spec = "%.17g") {
    char buf[48];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

}  // namespace

Eigen::MatrixXd stack_flattened(std::span<const ImageTensor> images) {
    if (images.empty()) return {};
    const auto& first = images.front();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(first.size()));
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (!images[i].same_geometry(first)) {
            throw DataError("stack_flattened: image " + std::to_string(i) + " is " + images[i].shape_string() +
                            ", image 0 is " + first.shape_string());
        }
        const auto flat = images[i].flatten();
        out.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(flat.data(), out.cols());
    }
    return out;
}

PcaModel fit_pca(const Eigen::MatrixXd& samples, std::size_t k) {
    const auto n = samples.rows();
    const auto d = samples.cols();
    if (k == 0) throw DataError("fit_pca: k must be at least 1");
    if (static_cast<Eigen::Index>(k) + 1 > n) {
        throw DataError("fit_pca: need at least k + 1 = " + std::to_string(k + 1) + " samples, got " +
                        std::to_string(n));
    }
    const auto max_rank = std::min(n - 1, d);
    if (static_cast<Eigen::Index>(k) > max_rank) {
        throw DataError("fit_pca: k = " + std::to_string(k) + " exceeds the attainable rank " + std::to_string(max_rank));
    }

    PcaModel model;
    model.mean = samples.colwise().mean().transpose();
    const Eigen::MatrixXd centered = samples.rowwise() - model.mean.transpose();
    const double norm = 1.0 / static_cast<double>(n - 1);
    auto apply_cov = [&](const Eigen::MatrixXd& v) -> Eigen::MatrixXd {
        return centered.transpose() * (centered * v) * norm;
    };

    const auto kk = static_cast<Eigen::Index>(k);
    const Eigen::Index block = std::min<Eigen::Index>(d, std::max<Eigen::Index>(kk + 16, 2 * kk));
    Eigen::MatrixXd start(d, block);
    Rng rng(kPcaStartSeed);
    for (Eigen::Index j = 0; j < block; ++j) {
        for (Eigen::Index i = 0; i < d; ++i) start(i, j) = rng.uniform(-1.0, 1.0);
    }
    Eigen::MatrixXd basis = orthonormalize(start);

    Eigen::MatrixXd ritz_vectors;
    Eigen::VectorXd ritz_values;
    for (int iter = 0; iter < kMaxIterations; ++iter) {
        const Eigen::MatrixXd image = apply_cov(basis);
        Eigen::MatrixXd projected = basis.transpose() * image;
        projected = 0.5 * (projected + projected.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> small(projected);
        // Eigen sorts ascending; reverse to descending
        const Eigen::MatrixXd rotation = small.eigenvectors().rowwise().reverse();
        ritz_values = small.eigenvalues().reverse();
        ritz_vectors = basis * rotation;
        const Eigen::MatrixXd ritz_image = image * rotation;

        const double scale = std::max(std::abs(ritz_values(0)), std::numeric_limits<double>::min());
        bool converged = true;
        for (Eigen::Index j = 0; j < kk && converged; ++j) {
            const double residual = (ritz_image.col(j) - ritz_values(j) * ritz_vectors.col(j)).norm();
            converged = residual <= kResidualTolerance * scale;
        }
        if (converged) break;
        basis = orthonormalize(ritz_image);
    }

    model.components = ritz_vectors.leftCols(kk);
    model.explained_variance = ritz_values.head(kk).cwiseMax(0.0);
    for (Eigen::Index j = 0; j < kk; ++j) fix_sign(model.components.col(j));
    return model;
}

Eigen::MatrixXd project_coords(const PcaModel& model, const Eigen::MatrixXd& samples) {
    if (samples.cols() != model.mean.size()) {
        throw DataError("project: samples have dimension " + std::to_string(samples.cols()) + ", model expects " +
                        std::to_string(model.mean.size()));
    }
    return (samples.rowwise() - model.mean.transpose()) * model.components;
}

ProjectionTable project(const PcaModel& model, std::span<const ImageTensor> images, std::span<const int> labels,
                        DomainTag domain) {
    if (labels.size() != images.size()) throw DataError("project: label count does not match image count");
    ProjectionTable table;
    if (images.empty()) return table;
    const Eigen::MatrixXd coords = project_coords(model, stack_flattened(images));
    table.reserve(images.size());
    for (Eigen::Index i = 0; i < coords.rows(); ++i) {
        table.push_back({domain, labels[static_cast<std::size_t>(i)], coords(i, 0),
                         coords.cols() > 1 ? coords(i, 1) : 0.0});
    }
    return table;
}

ProjectionTable project(const PcaModel& model, const Dataset& data) {
    return project(model, data.images, data.labels, data.domain);
}

double domain_gap(const ProjectionTable& table) {
    std::array<double, 2> sum_x{0.0, 0.0};
    std::array<double, 2> sum_y{0.0, 0.0};
    std::array<std::size_t, 2> count{0, 0};
    for (const auto& row : table) {
        const auto g = static_cast<std::size_t>(row.domain);
        sum_x[g] += row.pc1;
        sum_y[g] += row.pc2;
        ++count[g];
    }
    if (count[0] == 0 || count[1] == 0) throw DataError("domain_gap: table must contain both domains");
    std::array<double, 2> cx{}, cy{};
    for (std::size_t g = 0; g < 2; ++g) {
        cx[g] = sum_x[g] / static_cast<double>(count[g]);
        cy[g] = sum_y[g] / static_cast<double>(count[g]);
    }
    double scatter = 0.0;
    for (const auto& row : table) {
        const auto g = static_cast<std::size_t>(row.domain);
        scatter += (row.pc1 - cx[g]) * (row.pc1 - cx[g]) + (row.pc2 - cy[g]) * (row.pc2 - cy[g]);
    }
    const double dof = static_cast<double>(count[0] + count[1]) - 2.0;
    if (dof <= 0.0) throw DataError("domain_gap: need more than one point per domain");
    const double pooled_sd = std::sqrt(scatter / (2.0 * dof));
    if (!(pooled_sd > 0.0)) throw DataError("domain_gap: zero pooled spread");
    return std::hypot(cx[0] - cx[1], cy[0] - cy[1]) / pooled_sd;
}

std::string projection_csv(const ProjectionTable& table) {
    std::ostringstream csv;
    csv << "domain,label,pc1,pc2\n";
    for (const auto& row : table) {
        csv << to_string(row.domain) << ',' << row.label << ',' << fmt(row.pc1) << ',' << fmt(row.pc2) << '\n';
    }
    return csv.str();
}

std::string projection_svg(const ProjectionTable& table, const std::string& title) {
    static constexpr std::array<const char*, 10> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                             "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    constexpr double kSize = 640.0;
    constexpr double kMargin = 48.0;
    double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
    if (!table.empty()) {
        x0 = x1 = table.front().pc1;
        y0 = y1 = table.front().pc2;
        for (const auto& r : table) {
            x0 = std::min(x0, r.pc1);
            x1 = std::max(x1, r.pc1);
            y0 = std::min(y0, r.pc2);
            y1 = std::max(y1, r.pc2);
        }
        if (x1 == x0) x1 = x0 + 1.0;
        if (y1 == y0) y1 = y0 + 1.0;
    }
    const double span = kSize - 2.0 * kMargin;
    auto sx = [&](double v) { return kMargin + (v - x0) / (x1 - x0) * span; };
    auto sy = [&](double v) { return kSize - kMargin - (v - y0) / (y1 - y0) * span; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize
        << "\" viewBox=\"0 0 " << kSize << ' ' << kSize << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << kSize / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"16\">"
        << title << "</text>\n";
    svg << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << span << "\" height=\"" << span
        << "\" fill=\"none\" stroke=\"#444\"/>\n";
    svg << "<text x=\"" << kSize / 2 << "\" y=\"" << kSize - 12
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">pc1</text>\n";
    svg << "<text x=\"14\" y=\"" << kSize / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 "
        << kSize / 2 << ")\">pc2</text>\n";
    for (const auto& r : table) {
        const char* color = kPalette[static_cast<std::size_t>(std::clamp(r.label, 0, 9))];
        const std::string x = fmt(sx(r.pc1), "%.2f");
        const std::string y = fmt(sy(r.pc2), "%.2f");
        if (r.domain == DomainTag::source) {
            svg << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"3\" fill=\"none\" stroke=\"" << color
                << "\"/>\n";
        } else {
            const double cx = sx(r.pc1);
            const double cy = sy(r.pc2);
            svg << "<path d=\"M" << fmt(cx - 3, "%.2f") << ' ' << fmt(cy - 3, "%.2f") << "L" << fmt(cx + 3, "%.2f")
                << ' ' << fmt(cy + 3, "%.2f") << "M" << fmt(cx - 3, "%.2f") << ' ' << fmt(cy + 3, "%.2f") << "L"
                << fmt(cx + 3, "%.2f") << ' ' << fmt(cy - 3, "%.2f") << "\" stroke=\"" << color << "\"/>\n";
        }
    }
    for (std::size_t label = 0; label < kPalette.size(); ++label) {
        const double y = kMargin + 14.0 * static_cast<double>(label) + 8.0;
        svg << "<text x=\"" << kSize - kMargin - 4 << "\" y=\"" << y
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << kPalette[label]
            << "\">" << label << "</text>\n";
    }
    svg << "<text x=\"" << kMargin + 4 << "\" y=\"" << kMargin + 14
        << "\" font-family=\"sans-serif\" font-size=\"11\">o source   x target</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace dda
