#pragma once

// Figure rendering: turns solver/simulator CSV artifacts into per-figure
// tidy CSV datasets and, when requested, self-contained deterministic SVG
// renderings.  CSV is the contract of record; SVG carries no timestamps or
// environment-dependent bytes, so re-rendering identical inputs is
// byte-identical.

#include <string>
#include <vector>

namespace rfqmm {

enum class FigureId {
    ValueHeatmap,    // v(q, R) heatmap with the promotion-threshold line
    OffsetR,         // top-ladder gated offset vs score, feedback vs frozen
    OffsetQ,         // per-size offsets vs inventory at a fixed score
    PnlR,            // gated-flow PnL rate vs score at zero inventory
    PnlDrift,        // PnL rate against score drift (campaign/harvest loop)
    DriftPortrait,   // slow score drift field with its zeros
    Relaxation,      // fan of averaged score trajectories
    Bifurcation,     // fixed-point branches vs gate steepness
};

/// Parse a figure name like "value_heatmap"; throws std::invalid_argument
/// listing the valid names on failure.
FigureId parse_figure_id(const std::string& name);

/// Inverse of parse_figure_id.
std::string figure_id_name(FigureId id);

struct FigureStyle {
    bool svg = true;       // emit the SVG rendering next to the CSV
    int width = 720;       // SVG canvas in px
    int height = 480;
    // Axis overrides; NaN leaves the axis auto-ranged from the data.
    double x_min, x_max, y_min, y_max;
    bool log_x = false;
    bool log_y = false;
    // Horizontal marker line (promotion threshold); NaN draws it only when
    // the input metadata carries a gate_r0 entry.
    double r0_line;
    // Score slice for the offset-vs-inventory figure; NaN falls back to the
    // input's gate_r0 metadata, then to the middle of the score axis.
    double r_slice;

    FigureStyle();
};

struct FigureSpec {
    FigureId id = FigureId::ValueHeatmap;
    std::vector<std::string> inputs;  // figure-specific order, see render()
    std::string out_dir;
    FigureStyle style;
};

struct RenderOutput {
    std::vector<std::string> files;  // paths written, CSV first
};

/// Render one figure.  Expected inputs per figure:
///   value_heatmap   {value.csv: q, R, v}
///   offset_R        {controls.csv with score feedback, controls.csv frozen}
///   offset_q        {controls.csv}
///   pnl_R           {pnl.csv: q, R, Pi_A}
///   pnl_drift       {pnl.csv, drift.csv}
///   drift_portrait  {drift.csv: R, ybar, drift, drift_per_trade}
///   relaxation      {trajectories.csv: start, t, R}
///   bifurcation     {bifurcation.csv: beta, R_star, stability}
/// All inputs are validated before anything is written: a missing column,
/// an empty table, or a wrong input count raises std::runtime_error naming
/// the offending file and column, and no partial files are left behind.
/// Returns the list of files written (the figure CSV, then the SVG when
/// style.svg is set).
RenderOutput render(const FigureSpec& spec);

}  // namespace rfqmm
