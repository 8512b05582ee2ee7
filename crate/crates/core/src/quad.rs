//! Trapezoid quadrature and linear interpolation on sampled grids.

/// `n` equally spaced points covering `[0, 1]`, endpoints included exactly.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let last = (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { 1.0 } else { i as f64 / last })
                .collect()
        }
    }
}

/// Trapezoid weights for a (possibly nonuniform) grid, so that
/// `sum(w[i] * f[i])` is the trapezoid integral of `f`.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut w = vec![0.0; n];
    for i in 1..n {
        let half = 0.5 * (grid[i] - grid[i - 1]);
        w[i - 1] += half;
        w[i] += half;
    }
    w
}

pub fn trapz(grid: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(grid.len(), values.len());
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] + v[1]))
        .sum()
}

/// Running trapezoid integral; `out[0] = 0`.
pub fn cumtrapz(grid: &[f64], values: &[f64]) -> Vec<f64> {
    debug_assert_eq!(grid.len(), values.len());
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    if !values.is_empty() {
        out.push(0.0);
    }
    for i in 1..values.len() {
        acc += 0.5 * (grid[i] - grid[i - 1]) * (values[i] + values[i - 1]);
        out.push(acc);
    }
    out
}

/// Index `k` of the panel `[grid[k], grid[k+1]]` containing `t`, clamped to
/// the first/last panel for points outside the grid.
pub fn locate(grid: &[f64], t: f64) -> usize {
    debug_assert!(grid.len() >= 2);
    let last_panel = grid.len() - 2;
    match grid.binary_search_by(|g| g.total_cmp(&t)) {
        Ok(i) => i.min(last_panel),
        Err(0) => 0,
        Err(i) => (i - 1).min(last_panel),
    }
}

/// Piecewise-linear interpolation, constant extrapolation.
pub fn interp_linear(grid: &[f64], values: &[f64], t: f64) -> f64 {
    let n = grid.len();
    if n == 1 || t <= grid[0] {
        return values[0];
    }
    if t >= grid[n - 1] {
        return values[n - 1];
    }
    let k = locate(grid, t);
    let span = grid[k + 1] - grid[k];
    let s = (t - grid[k]) / span;
    values[k] + s * (values[k + 1] - values[k])
}
