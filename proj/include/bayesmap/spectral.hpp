#pragma once

// Cotangent Laplace-Beltrami operator, truncated eigenbasis, manifold
// Fourier analysis/synthesis, and spectral compression of distance rows.

#include "bayesmap/geodesics.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <memory>
#include <optional>
#include <random>

namespace bayesmap {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Stiffness (positive semidefinite cotangent matrix) and lumped mass diagonal.
struct Laplacian {
    SparseMatrix stiffness;
    VectorXd mass;
};

inline Laplacian build_laplacian(const TriMesh& mesh)
{
    const Index n = mesh.num_vertices();
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(mesh.num_faces()) * 12);
    for (const Face& f : mesh.faces()) {
        for (int c = 0; c < 3; ++c) {
            const int i = f[static_cast<std::size_t>((c + 1) % 3)];
            const int j = f[static_cast<std::size_t>((c + 2) % 3)];
            const Vec3 u = mesh.vertex(i) - mesh.vertex(f[static_cast<std::size_t>(c)]);
            const Vec3 v = mesh.vertex(j) - mesh.vertex(f[static_cast<std::size_t>(c)]);
            const double w = 0.5 * u.dot(v) / u.cross(v).norm();
            triplets.emplace_back(i, j, -w);
            triplets.emplace_back(j, i, -w);
            triplets.emplace_back(i, i, w);
            triplets.emplace_back(j, j, w);
        }
    }
    Laplacian lap;
    lap.stiffness.resize(n, n);
    lap.stiffness.setFromTriplets(triplets.begin(), triplets.end());
    lap.stiffness.makeCompressed();
    lap.mass = mesh.vertex_areas();
    return lap;
}

/// First k eigenpairs of (L, M). phi_mass is M-orthonormal; phi_weighted =
/// M^{1/2} phi_mass is orthonormal under the plain dot product.
struct SpectralBasis {
    VectorXd eigenvalues;
    MatrixXd phi_mass;
    MatrixXd phi_weighted;
    VectorXd mass;

    Index size() const { return eigenvalues.size(); }
    Index num_vertices() const { return phi_mass.rows(); }

    /// Basis restricted to its first k functions.
    SpectralBasis truncated(Index k) const
    {
        if (k < 1 || k > size())
            throw InvalidInput("SpectralBasis::truncated: k = " + std::to_string(k) + " exceeds basis size " +
                               std::to_string(size()));
        return {eigenvalues.head(k), phi_mass.leftCols(k), phi_weighted.leftCols(k), mass};
    }
};

struct EigenOptions {
    double tolerance = 1e-8;
    int max_iterations = 1000;
    /// Problems at or below this size (or with k > n/4) use a dense solve.
    Index dense_threshold = 400;
    bool force_iterative = false;
};

namespace detail {

inline void fix_signs(SpectralBasis& b)
{
    for (Index c = 0; c < b.size(); ++c) {
        Index at = 0;
        b.phi_mass.col(c).cwiseAbs().maxCoeff(&at);
        if (b.phi_mass(at, c) < 0.0) {
            b.phi_mass.col(c) *= -1.0;
            b.phi_weighted.col(c) *= -1.0;
        }
    }
}

inline double eigen_residual(const Laplacian& lap, const VectorXd& phi, double lambda)
{
    const VectorXd mphi = lap.mass.cwiseProduct(phi);
    return (lap.stiffness * phi - lambda * mphi).norm() / mphi.norm();
}

inline SpectralBasis finish_basis(const Laplacian& lap, VectorXd values, MatrixXd weighted)
{
    SpectralBasis b;
    const VectorXd inv_sqrt = lap.mass.cwiseSqrt().cwiseInverse();
    for (Index i = 0; i < values.size(); ++i)
        values[i] = std::max(0.0, values[i]);
    b.eigenvalues = std::move(values);
    b.phi_weighted = std::move(weighted);
    b.phi_mass = inv_sqrt.asDiagonal() * b.phi_weighted;
    b.mass = lap.mass;
    fix_signs(b);
    return b;
}

inline SparseMatrix symmetric_normalized(const Laplacian& lap)
{
    const VectorXd inv_sqrt = lap.mass.cwiseSqrt().cwiseInverse();
    return SparseMatrix(inv_sqrt.asDiagonal() * lap.stiffness * inv_sqrt.asDiagonal());
}

} // namespace detail

/// Solves L phi = lambda M phi for the k smallest eigenvalues. Small
/// problems use a dense symmetric solve; larger ones use shift-invert
/// subspace iteration around 0 with locking of converged vectors.
inline SpectralBasis eigenbasis(const Laplacian& lap, Index k, const EigenOptions& opt = {})
{
    const Index n = lap.stiffness.rows();
    if (k < 1 || k > n)
        throw InvalidInput("eigenbasis: k must lie in [1, n]");
    const SparseMatrix a = detail::symmetric_normalized(lap);

    SpectralBasis basis;
    if (!opt.force_iterative && (n <= opt.dense_threshold || 4 * k > n)) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(MatrixXd(a), Eigen::ComputeEigenvectors);
        if (es.info() != Eigen::Success)
            throw NumericalError("eigenbasis: dense eigen-solver failed");
        basis = detail::finish_basis(lap, es.eigenvalues().head(k), es.eigenvectors().leftCols(k));
    } else {
        const Index m = std::min(n, std::max(2 * k, k + 10));
        const double shift = 1e-6 * a.diagonal().mean();
        SparseMatrix shifted = a;
        for (Index i = 0; i < n; ++i)
            shifted.coeffRef(i, i) += shift;
        Eigen::SimplicialLDLT<SparseMatrix> solver(shifted);
        if (solver.info() != Eigen::Success)
            throw NumericalError("eigenbasis: factorisation of the shifted operator failed");

        std::mt19937_64 rng(0x5EED);
        std::normal_distribution<double> normal;
        MatrixXd x(n, m);
        for (Index j = 0; j < m; ++j)
            for (Index i = 0; i < n; ++i)
                x(i, j) = normal(rng);

        VectorXd theta;
        Index locked = 0;
        int iter = 0;
        for (; iter < opt.max_iterations; ++iter) {
            MatrixXd y(n, m);
            y.leftCols(locked) = x.leftCols(locked);
            y.rightCols(m - locked) = solver.solve(x.rightCols(m - locked));
            Eigen::HouseholderQR<MatrixXd> qr(y);
            const MatrixXd q = qr.householderQ() * MatrixXd::Identity(n, m);
            const MatrixXd h = q.transpose() * (a * q);
            Eigen::SelfAdjointEigenSolver<MatrixXd> small(0.5 * (h + h.transpose()));
            theta = small.eigenvalues();
            x = q * small.eigenvectors();

            const VectorXd inv_sqrt = lap.mass.cwiseSqrt().cwiseInverse();
            locked = 0;
            while (locked < k &&
                   detail::eigen_residual(lap, inv_sqrt.cwiseProduct(x.col(locked)), theta[locked]) < opt.tolerance)
                ++locked;
            if (locked == k)
                break;
        }
        if (locked < k)
            throw NumericalError("eigenbasis: eigenpair " + std::to_string(locked + 1) + " did not converge after " +
                                 std::to_string(iter) + " iterations");
        basis = detail::finish_basis(lap, theta.head(k), x.leftCols(k));
    }

    for (Index i = 0; i < k; ++i) {
        const double res = detail::eigen_residual(lap, basis.phi_mass.col(i), basis.eigenvalues[i]);
        if (!(res < 1e-6))
            throw NumericalError("eigenbasis: eigenpair " + std::to_string(i + 1) + " residual " +
                                 std::to_string(res) + " exceeds 1e-6");
    }
    return basis;
}

inline SpectralBasis eigenbasis(const TriMesh& mesh, Index k, const EigenOptions& opt = {})
{
    return eigenbasis(build_laplacian(mesh), k, opt);
}

/// Manifold Fourier coefficients <f, phi_i>, i.e. phi_weighted^T M^{1/2} f.
inline VectorXd analyze(const SpectralBasis& basis, const VectorXd& f)
{
    if (f.size() != basis.num_vertices())
        throw InvalidInput("analyze: function length does not match the basis");
    return basis.phi_weighted.transpose() * basis.mass.cwiseSqrt().cwiseProduct(f);
}

/// Inverse of analyze on the span of the basis: sum_i c_i phi_i.
inline VectorXd synthesize(const SpectralBasis& basis, const VectorXd& coeffs)
{
    if (coeffs.size() != basis.size())
        throw InvalidInput("synthesize: coefficient count does not match the basis");
    return basis.phi_mass * coeffs;
}

/// Distance matrix stored as its k x n Fourier coefficient matrix; rows are
/// decompressed on demand.
class CompressedDistances : public DistanceRows {
public:
    CompressedDistances(std::shared_ptr<const SpectralBasis> basis, MatrixXd coefficients)
        : basis_(std::move(basis)), coeffs_(std::move(coefficients))
    {
        if (coeffs_.rows() != basis_->size() || coeffs_.cols() != basis_->num_vertices())
            throw InvalidInput("CompressedDistances: coefficient matrix has the wrong shape");
    }

    Index size() const override { return coeffs_.cols(); }
    Index rank() const { return coeffs_.rows(); }
    const MatrixXd& coefficients() const { return coeffs_; }
    const SpectralBasis& basis() const { return *basis_; }

    /// Synthesised row, clamped to be nonnegative with a zero self-distance.
    void row(Index i, Eigen::Ref<VectorXd> out) const override
    {
        out.noalias() = basis_->phi_mass * coeffs_.col(i);
        out = out.cwiseMax(0.0);
        out[i] = 0.0;
    }
    using DistanceRows::row;

private:
    std::shared_ptr<const SpectralBasis> basis_;
    MatrixXd coeffs_;
};

/// Projects each distance row onto the basis, one row at a time.
inline CompressedDistances compress_distances(std::shared_ptr<const SpectralBasis> basis, const DistanceRows& dist)
{
    const Index n = dist.size();
    if (basis->num_vertices() != n)
        throw InvalidInput("compress_distances: basis and distances differ in vertex count");
    const Index k = basis->size();
    if (k > n)
        throw InvalidInput("compress_distances: k exceeds n");
    MatrixXd coeffs(k, n);
    parallel_for(0, n, [&](Index i) { coeffs.col(i) = analyze(*basis, dist.row(i)); });
    return CompressedDistances(std::move(basis), std::move(coeffs));
}

inline VectorXd decompress_row(const CompressedDistances& cd, Index i) { return cd.row(i); }

/// Spectral cache: "SPB1", u32 n, u32 k, k f64 eigenvalues, n*k f64
/// phi_mass column-major, then optionally "CDX1" and k*n f64 coefficients
/// column-major. The mass diagonal is not stored; it comes from the mesh.
inline void write_spectral_cache(std::ostream& os, const SpectralBasis& basis, const MatrixXd* coefficients = nullptr)
{
    io::write_magic(os, "SPB1");
    io::write_pod(os, static_cast<std::uint32_t>(basis.num_vertices()));
    io::write_pod(os, static_cast<std::uint32_t>(basis.size()));
    io::write_array(os, basis.eigenvalues.data(), static_cast<std::size_t>(basis.size()));
    io::write_array(os, basis.phi_mass.data(), static_cast<std::size_t>(basis.phi_mass.size()));
    if (coefficients) {
        io::write_magic(os, "CDX1");
        io::write_array(os, coefficients->data(), static_cast<std::size_t>(coefficients->size()));
    }
}

struct SpectralCache {
    SpectralBasis basis;
    std::optional<MatrixXd> coefficients;
};

inline SpectralCache read_spectral_cache(std::istream& is, const VectorXd& mass)
{
    if (!io::read_magic(is, "SPB1"))
        throw ParseError("not a spectral cache (bad magic)");
    const auto n = io::read_pod<std::uint32_t>(is);
    const auto k = io::read_pod<std::uint32_t>(is);
    if (static_cast<Index>(n) != mass.size())
        throw ParseError("spectral cache: vertex count does not match the mesh");
    SpectralCache cache;
    auto& b = cache.basis;
    b.eigenvalues.resize(k);
    b.phi_mass.resize(n, k);
    io::read_array(is, b.eigenvalues.data(), k);
    io::read_array(is, b.phi_mass.data(), static_cast<std::size_t>(n) * k);
    b.mass = mass;
    b.phi_weighted = mass.cwiseSqrt().asDiagonal() * b.phi_mass;
    char tag[4];
    if (is.read(tag, 4)) {
        if (std::string_view(tag, 4) != "CDX1")
            throw ParseError("spectral cache: unknown trailing block");
        MatrixXd a(k, n);
        io::read_array(is, a.data(), static_cast<std::size_t>(n) * k);
        cache.coefficients = std::move(a);
    }
    return cache;
}

} // namespace bayesmap
