#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dda/image.hpp"

namespace dda {

struct PcaModel {
    Eigen::VectorXd mean;
    Eigen::MatrixXd components;  ///< d x k, column j is component j (unit norm)
    Eigen::VectorXd explained_variance;  ///< descending, nonnegative

    [[nodiscard]] std::size_t k() const noexcept { return static_cast<std::size_t>(components.cols()); }
    [[nodiscard]] std::size_t dimension() const noexcept { return static_cast<std::size_t>(mean.size()); }
};

/// Row i = images[i].flatten(). Throws on mixed geometry.
Eigen::MatrixXd stack_flattened(std::span<const ImageTensor> images);

/// Top-k principal components of the rows of samples (n x d), by block
/// subspace iteration on the centered covariance with Rayleigh-Ritz
/// extraction. Each component's first coordinate that is clearly nonzero is
/// made positive. Requires n >= k + 1 and k <= min(n - 1, d).
PcaModel fit_pca(const Eigen::MatrixXd& samples, std::size_t k);

/// Coordinates (x - mean) . component_j, one row per sample.
Eigen::MatrixXd project_coords(const PcaModel& model, const Eigen::MatrixXd& samples);

struct ProjectionRow {
    DomainTag domain = DomainTag::source;
    int label = 0;
    double pc1 = 0.0;
    double pc2 = 0.0;
};

using ProjectionTable = std::vector<ProjectionRow>;

/// One row per image; pc2 is 0 for a single-component model.
ProjectionTable project(const PcaModel& model, std::span<const ImageTensor> images, std::span<const int> labels,
                        DomainTag domain);
ProjectionTable project(const PcaModel& model, const Dataset& data);

/// Distance between the source and target centroids in (pc1, pc2) divided by
/// the pooled per-axis standard deviation around each domain's centroid.
double domain_gap(const ProjectionTable& table);

/// "domain,label,pc1,pc2" with round-trip precision.
std::string projection_csv(const ProjectionTable& table);

/// Self-contained SVG scatter: source as circles, target as crosses,
/// colored by label.
std::string projection_svg(const ProjectionTable& table, const std::string& title);

}  // namespace dda
