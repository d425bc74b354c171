#pragma once

#include "psdmap/model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace psdmap {

// ---------------------------------------------------------------------------
// Kernel descriptions

/// K(x, x') = diag(exp(-|x - x'|^2 / sigma_m^2)). One width per channel.
struct DiagonalGaussian {
    std::vector<double> widths;  // sigma_m^2 > 0
};

/// Which quantity the TPS radial function is applied to.
enum class TpsArgument {
    Distance,         // r(|x - x'|), the classical thin-plate spline
    SquaredDistance,  // r(|x - x'|^2), literal reading of the matrix-kernel formula
};

/// K(x, x') = sign * r(z) I_M with r(z) = z^(2s-d) log z (d even) or z^(2s-d) (d odd).
struct TpsCpd {
    int order = 2;  // s
    int dim = 2;    // d
    int channels = 1;
    TpsArgument argument = TpsArgument::Distance;
};

/// K(x, x') = exp(-|x - x'|^2 / sigma^2) I_M.
struct ScalarSeparable {
    double sigma2 = 1.0;
    int channels = 1;
};

class KernelSpec {
public:
    using Variant = std::variant<DiagonalGaussian, TpsCpd, ScalarSeparable>;

    KernelSpec() : KernelSpec(ScalarSeparable{}) {}
    KernelSpec(Variant v);  // validates invariants

    static KernelSpec diagonal_gaussian(std::vector<double> widths) { return KernelSpec(DiagonalGaussian{std::move(widths)}); }
    static KernelSpec gaussian(double sigma2, int channels) { return KernelSpec(ScalarSeparable{sigma2, channels}); }
    static KernelSpec tps(int order, int dim, int channels, TpsArgument arg = TpsArgument::Distance) {
        return KernelSpec(TpsCpd{order, dim, channels, arg});
    }

    const Variant& variant() const { return v_; }
    int channels() const;
    /// True when K(x, x') = k(x, x') I_M for a scalar kernel k.
    bool separable() const;
    /// True when the kernel is positive definite (as opposed to only CPD).
    bool positive_definite() const;
    /// Scalar factor k(x, x'); only valid for separable kernels.
    double scalar(const Location& x, const Location& x2) const;
    std::string describe() const;

private:
    Variant v_;
};

// ---------------------------------------------------------------------------
// Parametric bases

/// B_1 = I_M, B_{1+j} = x_j I_M.
struct TpsPolynomial {
    int dim = 1;
};

/// One basis matrix, diagonal with entries 1 / (delta + |x - chi_m|^gamma) for m < M and 0 at (M, M).
struct TransmitterPathloss {
    std::vector<Location> transmitters;
    double gamma = 3.0;
    double delta = 1e-2;
};

struct NoBasis {};

class BasisSpec {
public:
    using Variant = std::variant<NoBasis, TpsPolynomial, TransmitterPathloss>;

    BasisSpec() : v_(NoBasis{}) {}
    BasisSpec(Variant v);

    static BasisSpec none() { return BasisSpec(NoBasis{}); }
    static BasisSpec tps_polynomial(int dim) { return BasisSpec(TpsPolynomial{dim}); }
    static BasisSpec pathloss(std::vector<Location> tx, double gamma = 3.0, double delta = 1e-2) {
        return BasisSpec(TransmitterPathloss{std::move(tx), gamma, delta});
    }

    const Variant& variant() const { return v_; }
    /// Number of basis matrices N_B.
    int count() const;
    bool empty() const { return count() == 0; }
    /// True when every B_nu(x) is a scalar multiple of I_M.
    bool separable() const;
    /// M x (N_B * M) row block [B_1(x), ..., B_NB(x)].
    Matrix block(const Location& x, int channels) const;
    /// Scalar values b_nu(x) for separable bases (length N_B).
    Vector scalar_row(const Location& x) const;
    std::string describe() const;

private:
    Variant v_;
};

// ---------------------------------------------------------------------------
// Assembly

/// Gram matrix of a kernel over an anchor set. Separable kernels are stored as the
/// N x N scalar matrix; the MN x MN block form is K_scalar kron I_M.
struct KernelMatrix {
    std::vector<Location> anchors;
    int channels = 1;
    std::optional<Matrix> dense;   // MN x MN
    std::optional<Matrix> scalar;  // N x N

    bool is_separable() const { return scalar.has_value(); }
    Matrix to_dense() const;
};

double tps_radial(double z, int order, int dim);

Matrix kernel_block(const KernelSpec& spec, const Location& x, const Location& x2);

/// Diagonal entry (m, m) of K(x, x2). All supported kernels are diagonal.
double kernel_entry(const KernelSpec& spec, int m, const Location& x, const Location& x2);

/// Per-channel scalar Gram matrices over the anchors. Separable kernels return a single
/// matrix shared by every channel.
std::vector<Matrix> channel_kernels(const KernelSpec& spec, const std::vector<Location>& anchors);

/// Per-channel scalar basis values: entry m is N x (number of basis functions acting on
/// channel m). Channel m's columns map to theta indices nu * M + m. Columns that are
/// identically zero by construction (the noise channel of the pathloss basis) are omitted.
struct ChannelBasis {
    std::vector<Matrix> values;
    std::vector<std::vector<Eigen::Index>> theta_index;
};
ChannelBasis channel_basis(const BasisSpec& spec, const std::vector<Location>& anchors, int channels);

KernelMatrix assemble_kernel(const KernelSpec& spec, const std::vector<Location>& anchors);

/// Dense MN x MN block matrix with (n, n') block K(x_n, x_n').
Matrix assemble_kernel_dense(const KernelSpec& spec, const std::vector<Location>& anchors);

/// NM x (N_B M) matrix whose (n, nu) block is B_nu(x_n).
Matrix assemble_basis_matrix(const BasisSpec& spec, const std::vector<Location>& anchors, int channels);

/// N x N_B matrix of scalar basis values (separable bases only).
Matrix assemble_scalar_basis(const BasisSpec& spec, const std::vector<Location>& anchors);

/// I - B (B^T B)^{-1} B^T. Throws SolverError naming `basis_name` when B^T B is singular.
Matrix projector(const Matrix& basis_matrix, const std::string& basis_name = "basis");

/// Samples `trials` random c, projects them onto null(B^T) and checks c^T K c >= -1e-9 (relative to |K|).
bool cpd_check(const KernelSpec& kernel, const BasisSpec& basis, const std::vector<Location>& anchors,
               int trials, std::uint64_t seed = 1);

}  // namespace psdmap
