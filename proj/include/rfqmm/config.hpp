#pragma once

// JSON configuration: model parameters, solver grid and fixed-point
// controls in one versioned document.  Loading is fail-closed: unknown keys,
// missing keys and out-of-domain values are rejected with the offending key
// named in the error.

#include <cstdint>
#include <string>

#include "rfqmm/grid.hpp"
#include "rfqmm/params.hpp"

namespace rfqmm {

inline constexpr int kConfigVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

/// Controls for the block-stationary fixed point on the score boundary
/// profile.
struct FixedPointParams {
    double tol = 1e-6;          ///< sup-norm increment tolerance, bp*M
    int max_iter = 200;
    double zeta = 0.5;          ///< damping for the plain iteration
    int anderson_m = 5;         ///< history depth; 0 = plain damped iteration
    double anderson_ridge = 1e-8;
    bool warm_start = true;     ///< geometric-series initializer from pass 1

    void validate() const {
        if (!(tol > 0.0)) throw std::invalid_argument("fixed_point.tol: must be > 0");
        if (max_iter < 1)
            throw std::invalid_argument("fixed_point.max_iter: must be >= 1");
        if (!(zeta > 0.0 && zeta <= 1.0))
            throw std::invalid_argument("fixed_point.zeta: must lie in (0,1]");
        if (anderson_m < 0)
            throw std::invalid_argument("fixed_point.anderson_m: must be >= 0");
        if (!(anderson_ridge >= 0.0))
            throw std::invalid_argument("fixed_point.anderson_ridge: must be >= 0");
    }
};

struct SolverConfig {
    ModelParams model;
    GridSpec grid;
    FixedPointParams fixed_point;

    void validate() const {
        model.validate();
        grid.validate(model);
        fixed_point.validate();
    }
};

/// Parse and validate a config document.  Rejects unknown keys at every
/// nesting level and version mismatches.
SolverConfig load_config(const std::string& json_text);
SolverConfig load_config_file(const std::string& path);

/// Canonical serialization (sorted keys, full precision).  load(save(c))
/// reproduces c exactly.
std::string save_config(const SolverConfig& c);

/// FNV-1a hash of the canonical serialization; stamped into every output
/// file so artifacts can be traced to the exact parameter set.
std::uint64_t config_hash(const SolverConfig& c);
std::string config_hash_hex(const SolverConfig& c);

/// Built-in default parameter set (same document as data/default_params.json).
SolverConfig default_config();

}  // namespace rfqmm
