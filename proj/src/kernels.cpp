#include "psdmap/kernels.hpp"

#include "psdmap/rng.hpp"

#include <cmath>
#include <sstream>

namespace psdmap {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Duchon sign making the radial function conditionally positive (rather than negative) definite.
double tps_sign(int order, int dim) {
    const int exponent = order - dim / 2 + (dim % 2 == 0 ? 1 : 0);
    return exponent % 2 == 0 ? 1.0 : -1.0;
}

double tps_value(const TpsCpd& t, const Location& x, const Location& x2) {
    const double z = t.argument == TpsArgument::Distance ? distance(x, x2) : squared_distance(x, x2);
    return tps_sign(t.order, t.dim) * tps_radial(z, t.order, t.dim);
}

void check_dims(const Location& x, const Location& x2) {
    if (x.dim() != x2.dim()) throw DimensionError("locations differ in dimension");
}

}  // namespace

// ---------------------------------------------------------------------------

KernelSpec::KernelSpec(Variant v) : v_(std::move(v)) {
    std::visit(overloaded{
                   [](const DiagonalGaussian& g) {
                       if (g.widths.empty()) throw DimensionError("diagonal Gaussian kernel needs M >= 1 widths");
                       for (double w : g.widths) {
                           if (!(w > 0.0)) throw DimensionError("Gaussian widths sigma_m^2 must be positive");
                       }
                   },
                   [](const TpsCpd& t) {
                       if (t.order < 1 || t.dim < 1 || 2 * t.order - t.dim <= 0)
                           throw DimensionError("TPS kernel needs s >= 1 and 2s - d > 0");
                       if (t.channels < 1) throw DimensionError("TPS kernel needs M >= 1");
                   },
                   [](const ScalarSeparable& s) {
                       if (!(s.sigma2 > 0.0)) throw DimensionError("Gaussian width must be positive");
                       if (s.channels < 1) throw DimensionError("separable kernel needs M >= 1");
                   },
               },
               v_);
}

int KernelSpec::channels() const {
    return std::visit(overloaded{
                          [](const DiagonalGaussian& g) { return static_cast<int>(g.widths.size()); },
                          [](const TpsCpd& t) { return t.channels; },
                          [](const ScalarSeparable& s) { return s.channels; },
                      },
                      v_);
}

bool KernelSpec::separable() const {
    if (const auto* g = std::get_if<DiagonalGaussian>(&v_)) {
        for (double w : g->widths) {
            if (w != g->widths.front()) return false;
        }
    }
    return true;
}

bool KernelSpec::positive_definite() const { return !std::holds_alternative<TpsCpd>(v_); }

double KernelSpec::scalar(const Location& x, const Location& x2) const {
    check_dims(x, x2);
    return std::visit(overloaded{
                          [&](const DiagonalGaussian& g) {
                              if (!separable()) throw DimensionError("kernel is not separable");
                              return std::exp(-squared_distance(x, x2) / g.widths.front());
                          },
                          [&](const TpsCpd& t) { return tps_value(t, x, x2); },
                          [&](const ScalarSeparable& s) { return std::exp(-squared_distance(x, x2) / s.sigma2); },
                      },
                      v_);
}

std::string KernelSpec::describe() const {
    std::ostringstream os;
    std::visit(overloaded{
                   [&](const DiagonalGaussian& g) {
                       os << "diagonal_gaussian(";
                       for (std::size_t i = 0; i < g.widths.size(); ++i) os << (i ? "," : "") << g.widths[i];
                       os << ")";
                   },
                   [&](const TpsCpd& t) {
                       os << "tps(s=" << t.order << ",d=" << t.dim << ",M=" << t.channels
                          << (t.argument == TpsArgument::Distance ? ",distance" : ",squared") << ")";
                   },
                   [&](const ScalarSeparable& s) { os << "gaussian(" << s.sigma2 << ",M=" << s.channels << ")"; },
               },
               v_);
    return os.str();
}

// ---------------------------------------------------------------------------

BasisSpec::BasisSpec(Variant v) : v_(std::move(v)) {
    if (const auto* t = std::get_if<TpsPolynomial>(&v_)) {
        if (t->dim < 1) throw DimensionError("polynomial basis needs d >= 1");
    }
    if (const auto* p = std::get_if<TransmitterPathloss>(&v_)) {
        if (p->transmitters.empty()) throw DimensionError("pathloss basis needs at least one transmitter");
        if (!(p->delta > 0.0)) throw DimensionError("pathloss offset delta must be positive");
    }
}

int BasisSpec::count() const {
    return std::visit(overloaded{
                          [](const NoBasis&) { return 0; },
                          [](const TpsPolynomial& t) { return 1 + t.dim; },
                          [](const TransmitterPathloss&) { return 1; },
                      },
                      v_);
}

bool BasisSpec::separable() const { return !std::holds_alternative<TransmitterPathloss>(v_); }

Vector BasisSpec::scalar_row(const Location& x) const {
    return std::visit(overloaded{
                          [](const NoBasis&) -> Vector { return Vector(0); },
                          [&](const TpsPolynomial& t) -> Vector {
                              if (x.dim() != t.dim) throw DimensionError("location dimension does not match basis");
                              Vector row(1 + t.dim);
                              row(0) = 1.0;
                              row.tail(t.dim) = x.coords;
                              return row;
                          },
                          [](const TransmitterPathloss&) -> Vector {
                              throw DimensionError("pathloss basis is not separable");
                          },
                      },
                      v_);
}

Matrix BasisSpec::block(const Location& x, int channels) const {
    const int nb = count();
    Matrix out = Matrix::Zero(channels, nb * channels);
    if (const auto* p = std::get_if<TransmitterPathloss>(&v_)) {
        if (static_cast<int>(p->transmitters.size()) + 1 != channels)
            throw DimensionError("pathloss basis needs M - 1 transmitters");
        for (int m = 0; m + 1 < channels; ++m) {
            const auto& tx = p->transmitters[static_cast<std::size_t>(m)];
            if (tx.dim() != x.dim()) throw DimensionError("transmitter and location dimensions differ");
            out(m, m) = 1.0 / (p->delta + std::pow(distance(x, tx), p->gamma));
        }
        return out;
    }
    const Vector row = scalar_row(x);
    for (int nu = 0; nu < nb; ++nu) {
        out.block(0, nu * channels, channels, channels).diagonal().setConstant(row(nu));
    }
    return out;
}

std::string BasisSpec::describe() const {
    std::ostringstream os;
    std::visit(overloaded{
                   [&](const NoBasis&) { os << "none"; },
                   [&](const TpsPolynomial& t) { os << "tps_polynomial(d=" << t.dim << ")"; },
                   [&](const TransmitterPathloss& p) {
                       os << "pathloss(tx=" << p.transmitters.size() << ",gamma=" << p.gamma << ",delta=" << p.delta
                          << ")";
                   },
               },
               v_);
    return os.str();
}

// ---------------------------------------------------------------------------

double tps_radial(double z, int order, int dim) {
    if (order < 1 || dim < 1 || 2 * order - dim <= 0) throw DimensionError("tps_radial needs 2s - d > 0");
    if (z < 0.0) throw DimensionError("tps_radial argument must be nonnegative");
    const int p = 2 * order - dim;
    const double base = std::pow(z, p);
    if (dim % 2 == 0) {
        if (z == 0.0) return 0.0;  // continuous extension of z^p log z
        return base * std::log(z);
    }
    return base;
}

Matrix kernel_block(const KernelSpec& spec, const Location& x, const Location& x2) {
    check_dims(x, x2);
    const int m = spec.channels();
    if (const auto* g = std::get_if<DiagonalGaussian>(&spec.variant())) {
        const double d2 = squared_distance(x, x2);
        Matrix out = Matrix::Zero(m, m);
        for (int i = 0; i < m; ++i) out(i, i) = std::exp(-d2 / g->widths[static_cast<std::size_t>(i)]);
        return out;
    }
    if (const auto* t = std::get_if<TpsCpd>(&spec.variant())) {
        if (x.dim() != t->dim) throw DimensionError("location dimension does not match TPS kernel");
    }
    return spec.scalar(x, x2) * Matrix::Identity(m, m);
}

double kernel_entry(const KernelSpec& spec, int m, const Location& x, const Location& x2) {
    if (const auto* g = std::get_if<DiagonalGaussian>(&spec.variant())) {
        check_dims(x, x2);
        return std::exp(-squared_distance(x, x2) / g->widths.at(static_cast<std::size_t>(m)));
    }
    return spec.scalar(x, x2);
}

std::vector<Matrix> channel_kernels(const KernelSpec& spec, const std::vector<Location>& anchors) {
    const auto n = static_cast<Eigen::Index>(anchors.size());
    const int count = spec.separable() ? 1 : spec.channels();
    std::vector<Matrix> out;
    for (int m = 0; m < count; ++m) {
        Matrix k(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i; j < n; ++j)
                k(i, j) = k(j, i) = kernel_entry(spec, m, anchors[static_cast<std::size_t>(i)], anchors[static_cast<std::size_t>(j)]);
        out.push_back(std::move(k));
    }
    return out;
}

ChannelBasis channel_basis(const BasisSpec& spec, const std::vector<Location>& anchors, int channels) {
    const auto n = static_cast<Eigen::Index>(anchors.size());
    ChannelBasis out;
    out.values.resize(static_cast<std::size_t>(channels));
    out.theta_index.resize(static_cast<std::size_t>(channels));
    if (const auto* p = std::get_if<TransmitterPathloss>(&spec.variant())) {
        if (static_cast<int>(p->transmitters.size()) + 1 != channels)
            throw DimensionError("pathloss basis needs M - 1 transmitters");
        for (int m = 0; m < channels; ++m) {
            auto& v = out.values[static_cast<std::size_t>(m)];
            if (m + 1 == channels) {
                v = Matrix(n, 0);
                continue;
            }
            v.resize(n, 1);
            for (Eigen::Index i = 0; i < n; ++i) v(i, 0) = spec.block(anchors[static_cast<std::size_t>(i)], channels)(m, m);
            out.theta_index[static_cast<std::size_t>(m)] = {m};
        }
        return out;
    }
    const Matrix scalar = spec.empty() ? Matrix(n, 0) : assemble_scalar_basis(spec, anchors);
    for (int m = 0; m < channels; ++m) {
        out.values[static_cast<std::size_t>(m)] = scalar;
        for (Eigen::Index nu = 0; nu < scalar.cols(); ++nu)
            out.theta_index[static_cast<std::size_t>(m)].push_back(nu * channels + m);
    }
    return out;
}

Matrix KernelMatrix::to_dense() const {
    if (dense) return *dense;
    const auto n = scalar->rows();
    Matrix out = Matrix::Zero(n * channels, n * channels);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            out.block(i * channels, j * channels, channels, channels).diagonal().setConstant((*scalar)(i, j));
    return out;
}

Matrix assemble_kernel_dense(const KernelSpec& spec, const std::vector<Location>& anchors) {
    const int m = spec.channels();
    const auto n = static_cast<Eigen::Index>(anchors.size());
    Matrix k(n * m, n * m);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            const Matrix blk = kernel_block(spec, anchors[static_cast<std::size_t>(i)], anchors[static_cast<std::size_t>(j)]);
            k.block(i * m, j * m, m, m) = blk;
            k.block(j * m, i * m, m, m) = blk.transpose();
        }
    }
    return k;
}

KernelMatrix assemble_kernel(const KernelSpec& spec, const std::vector<Location>& anchors) {
    if (anchors.empty()) throw DimensionError("kernel assembly needs at least one anchor");
    KernelMatrix out;
    out.anchors = anchors;
    out.channels = spec.channels();
    if (spec.separable()) {
        const auto n = static_cast<Eigen::Index>(anchors.size());
        Matrix s(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i; j < n; ++j) {
                s(i, j) = s(j, i) = spec.scalar(anchors[static_cast<std::size_t>(i)], anchors[static_cast<std::size_t>(j)]);
            }
        }
        out.scalar = std::move(s);
    } else {
        out.dense = assemble_kernel_dense(spec, anchors);
    }
    return out;
}

Matrix assemble_basis_matrix(const BasisSpec& spec, const std::vector<Location>& anchors, int channels) {
    const int nb = spec.count();
    const auto n = static_cast<Eigen::Index>(anchors.size());
    Matrix b(n * channels, nb * channels);
    for (Eigen::Index i = 0; i < n; ++i) b.middleRows(i * channels, channels) = spec.block(anchors[static_cast<std::size_t>(i)], channels);
    return b;
}

Matrix assemble_scalar_basis(const BasisSpec& spec, const std::vector<Location>& anchors) {
    if (!spec.separable()) throw DimensionError("basis is not separable");
    const auto n = static_cast<Eigen::Index>(anchors.size());
    Matrix b(n, spec.count());
    for (Eigen::Index i = 0; i < n; ++i) b.row(i) = spec.scalar_row(anchors[static_cast<std::size_t>(i)]).transpose();
    return b;
}

Matrix projector(const Matrix& basis_matrix, const std::string& basis_name) {
    const auto rows = basis_matrix.rows();
    if (basis_matrix.cols() == 0) return Matrix::Identity(rows, rows);
    const Matrix gram = basis_matrix.transpose() * basis_matrix;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
    const double hi = eig.eigenvalues().maxCoeff();
    const double lo = eig.eigenvalues().minCoeff();
    if (!(hi > 0.0) || !(lo > hi * 1e-12))
        throw SolverError("B^T B is singular for " + basis_name + " (basis matrix is not full column rank)");
    const Matrix proj = basis_matrix * gram.ldlt().solve(basis_matrix.transpose());
    Matrix p = Matrix::Identity(rows, rows) - proj;
    return 0.5 * (p + p.transpose());
}

bool cpd_check(const KernelSpec& kernel, const BasisSpec& basis, const std::vector<Location>& anchors, int trials,
               std::uint64_t seed) {
    const int m = kernel.channels();
    const Matrix k = assemble_kernel_dense(kernel, anchors);
    const Matrix p = projector(assemble_basis_matrix(basis, anchors, m), basis.describe());
    const double scale = std::max(1.0, k.cwiseAbs().maxCoeff() * static_cast<double>(k.rows()));
    CounterRng rng(seed, Stream::Generic, 0xC0D);
    for (int t = 0; t < trials; ++t) {
        Vector c(k.rows());
        for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = rng.normal();
        c = p * c;
        const double norm = c.norm();
        if (norm == 0.0) continue;
        c /= norm;
        if (c.dot(k * c) < -1e-9 * scale) return false;
    }
    return true;
}

}  // namespace psdmap
