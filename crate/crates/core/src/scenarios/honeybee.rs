//! Honeybee-inspired aggregation: micro-robots random-walk a temperature
//! grid, stop when they bump into an occupied cell, and rest longer where it
//! is warmer. A robot joins the optimal cluster when it stands on the
//! warmest cell together with at least one other robot (present or already
//! clustered); the success state is absorbing, so the cluster only grows.
//! A single robot never clusters: it has nobody to collide with.

use std::fmt::Write as _;

use thiserror::Error;

use crate::text::{parse_deployment, parse_model, Deployment, ModelDocument};

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    /// Temperature per cell, row-major; length must be width * height.
    pub temperatures: Vec<f64>,
    /// Resting-time mapping: mean sojourn at the lowest / highest
    /// temperature in the field, linearly interpolated between.
    pub rest_mean_lo: f64,
    pub rest_mean_hi: f64,
    /// Mean time a moving robot spends in a cell before its next hop.
    pub move_mean: f64,
}

impl GridSpec {
    /// Diagonal gradient from `temp_lo` at (0,0) to `temp_hi` at the far
    /// corner; the warmest cell is unique.
    pub fn gradient(width: usize, height: usize, temp_lo: f64, temp_hi: f64) -> Self {
        assert!(width >= 1 && height >= 1);
        let span = ((width - 1) + (height - 1)).max(1) as f64;
        let temperatures = (0..height)
            .flat_map(|y| {
                (0..width)
                    .map(move |x| (x + y) as f64 / span)
                    .collect::<Vec<_>>()
            })
            .map(|t| temp_lo + t * (temp_hi - temp_lo))
            .collect();
        GridSpec {
            width,
            height,
            temperatures,
            rest_mean_lo: 1.0,
            rest_mean_hi: 6.0,
            move_mean: 0.8,
        }
    }

    /// Field peaking at an interior cell, falling off linearly with
    /// Manhattan distance; the coldest corner sits at `temp_lo`.
    pub fn peaked(width: usize, height: usize, temp_lo: f64, temp_hi: f64) -> Self {
        assert!(width >= 1 && height >= 1);
        let (px, py) = (3 * width / 4, 3 * height / 4);
        let corner_dist = |x: usize, y: usize| px.abs_diff(x) + py.abs_diff(y);
        let max_d = [
            corner_dist(0, 0),
            corner_dist(width - 1, 0),
            corner_dist(0, height - 1),
            corner_dist(width - 1, height - 1),
        ]
        .into_iter()
        .max()
        .unwrap()
        .max(1) as f64;
        let temperatures = (0..height)
            .flat_map(|y| (0..width).map(move |x| corner_dist(x, y) as f64).collect::<Vec<_>>())
            .map(|d| temp_hi - (temp_hi - temp_lo) * d / max_d)
            .collect();
        GridSpec {
            width,
            height,
            temperatures,
            rest_mean_lo: 1.0,
            rest_mean_hi: 6.0,
            move_mean: 0.8,
        }
    }

    /// The default arena: a 10x10 grid from 22 to 36 degrees with the
    /// warmest cell mid-grid.
    pub fn default_arena() -> Self {
        Self::peaked(10, 10, 22.0, 36.0)
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    fn temp_bounds(&self) -> (f64, f64) {
        let lo = self.temperatures.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.temperatures.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Mean resting sojourn after a collision stop in the given cell.
    pub fn rest_mean(&self, cell: usize) -> f64 {
        let (lo, hi) = self.temp_bounds();
        let t = self.temperatures[cell];
        if hi <= lo {
            return self.rest_mean_hi;
        }
        self.rest_mean_lo + (t - lo) / (hi - lo) * (self.rest_mean_hi - self.rest_mean_lo)
    }

    /// Warmest cell; ties resolve to the lowest index.
    pub fn optimal_cell(&self) -> usize {
        let mut best = 0;
        for i in 1..self.temperatures.len() {
            if self.temperatures[i] > self.temperatures[best] {
                best = i;
            }
        }
        best
    }

    /// Cell whose temperature is closest to `target`; ties resolve low.
    pub fn cell_at_temperature(&self, target: f64) -> usize {
        let mut best = 0;
        for i in 1..self.temperatures.len() {
            if (self.temperatures[i] - target).abs() < (self.temperatures[best] - target).abs() {
                best = i;
            }
        }
        best
    }
}

/// Initial swarm placement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BeeStart {
    /// Uniform categorical distribution over all cells.
    Scattered,
    /// Everybody in the cell closest to this temperature.
    AllAtTemperature(f64),
    AllAtCell(usize, usize),
}

#[derive(Debug, Error, PartialEq)]
pub enum HoneybeeError {
    #[error("grid needs width * height temperatures, got {0}")]
    BadTemperatures(usize),
    #[error("{robots} robots exceed the grid capacity of {cells} cells")]
    Capacity { robots: u32, cells: usize },
    #[error("need at least one robot")]
    NoRobots,
    #[error("start cell ({0}, {1}) lies outside the grid")]
    BadStartCell(usize, usize),
}

/// Cluster size that counts as success: more than two thirds of the swarm
/// for up to 15 robots, 15 afterwards.
pub fn cluster_threshold(n_robots: u32) -> u32 {
    if n_robots <= 15 {
        (2 * n_robots) / 3 + 1
    } else {
        15
    }
}

pub fn gen_honeybee(
    grid: &GridSpec,
    n_robots: u32,
    start: BeeStart,
    horizon_time: f64,
    threshold_override: Option<u32>,
) -> Result<(ModelDocument, Deployment), HoneybeeError> {
    if grid.temperatures.len() != grid.cells() {
        return Err(HoneybeeError::BadTemperatures(grid.temperatures.len()));
    }
    if n_robots == 0 {
        return Err(HoneybeeError::NoRobots);
    }
    if n_robots as usize > grid.cells() {
        return Err(HoneybeeError::Capacity { robots: n_robots, cells: grid.cells() });
    }

    let (w, h) = (grid.width, grid.height);
    let opt = grid.optimal_cell();
    let threshold = threshold_override.unwrap_or_else(|| cluster_threshold(n_robots));

    // Spatial state list: moving then resting per cell, in cell order, so
    // the moving state of cell c has index 2c and the resting state 2c+1.
    let moving = |c: usize| format!("M_{}_{}", c % w, c / w);
    let resting = |c: usize| format!("R_{}_{}", c % w, c / w);
    let at_label = |c: usize| format!("at_{}_{}", c % w, c / w);

    let mut m = String::new();
    let _ = writeln!(m, "// Honeybee aggregation on a {w}x{h} temperature grid.");
    let _ = writeln!(m, "agentclass Bee {{");
    let _ = writeln!(m, "  spatial {{");
    for c in 0..grid.cells() {
        let opt_label = if c == opt { " at_opt" } else { "" };
        let _ = writeln!(
            m,
            "    state {} delay exp({}) labels {}{opt_label}",
            moving(c),
            1.0 / grid.move_mean,
            at_label(c),
        );
        let _ = writeln!(
            m,
            "    state {} delay exp({}) labels {}{opt_label} resting",
            resting(c),
            1.0 / grid.rest_mean(c),
            at_label(c),
        );
    }
    for c in 0..grid.cells() {
        let (x, y) = (c % w, c / w);
        let mut neighbors = Vec::new();
        if x > 0 {
            neighbors.push(c - 1);
        }
        if x + 1 < w {
            neighbors.push(c + 1);
        }
        if y > 0 {
            neighbors.push(c - w);
        }
        if y + 1 < h {
            neighbors.push(c + w);
        }
        for from in [moving(c), resting(c)] {
            for &nb in &neighbors {
                let _ = writeln!(
                    m,
                    "    on {from} -> {} guard agent_count({}) == 0",
                    moving(nb),
                    at_label(nb),
                );
                let _ = writeln!(
                    m,
                    "    on {from} -> {} guard agent_count({}) > 0",
                    resting(nb),
                    at_label(nb),
                );
            }
        }
    }
    let _ = writeln!(m, "  }}");
    let _ = writeln!(m, "  predicates {{");
    // Joining needs company: the robot stands on the warmest cell together
    // with enough others (present or already clustered) to call the group a
    // cluster. A lone robot can therefore never succeed.
    let join = 3.min(n_robots.max(2));
    let _ = writeln!(
        m,
        "    success OptimalCluster when (self_pos() == {mi} || self_pos() == {ri}) && agent_count(at_opt) + agent_count(OptimalCluster) >= {join}",
        mi = 2 * opt,
        ri = 2 * opt + 1,
    );
    let _ = writeln!(m, "  }}");
    let _ = writeln!(m, "}}");

    let doc = parse_model(&m).expect("generated honeybee model must parse");

    let mut d = String::new();
    let _ = writeln!(d, "horizon_time = {horizon_time}");
    let _ = writeln!(
        d,
        "property = \"F[SystemTime<={horizon_time}] OptimalClusterNum >= {threshold}\""
    );
    let _ = writeln!(d);
    let _ = writeln!(d, "[[instances]]");
    let _ = writeln!(d, "class = \"Bee\"");
    let _ = writeln!(d, "count = {n_robots}");
    match start {
        BeeStart::Scattered => {
            let _ = writeln!(d, "[instances.initial_dist]");
            let weight = 1.0 / grid.cells() as f64;
            for c in 0..grid.cells() {
                let _ = writeln!(d, "{} = {weight}", moving(c));
            }
        }
        BeeStart::AllAtTemperature(t) => {
            let c = grid.cell_at_temperature(t);
            let _ = writeln!(d, "initial = \"{}\"", moving(c));
        }
        BeeStart::AllAtCell(x, y) => {
            if x >= w || y >= h {
                return Err(HoneybeeError::BadStartCell(x, y));
            }
            let _ = writeln!(d, "initial = \"{}\"", moving(y * w + x));
        }
    }
    let deployment = parse_deployment(&d).expect("generated honeybee deployment must parse");

    Ok((doc, deployment))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_rule() {
        assert_eq!(cluster_threshold(12), 9); // more than two thirds of 12
        assert_eq!(cluster_threshold(15), 11);
        assert_eq!(cluster_threshold(20), 15);
        assert_eq!(cluster_threshold(33), 15);
        assert_eq!(cluster_threshold(1), 1);
    }

    #[test]
    fn default_arena_has_unique_optimum_and_full_range() {
        let grid = GridSpec::default_arena();
        assert_eq!(grid.cells(), 100);
        // Peak at (7,7); the single coldest cell is the far corner (0,0).
        assert_eq!(grid.optimal_cell(), 77);
        assert_eq!(grid.temperatures[0], 22.0);
        assert_eq!(grid.temperatures[77], 36.0);
        assert_eq!(
            grid.temperatures.iter().filter(|t| **t == 36.0).count(),
            1
        );
        assert!((grid.rest_mean(0) - 1.0).abs() < 1e-12);
        assert!((grid.rest_mean(77) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn twenty_robots_on_the_default_grid() {
        let grid = GridSpec::default_arena();
        let (doc, dep) =
            gen_honeybee(&grid, 20, BeeStart::Scattered, 1000.0, None).unwrap();
        // One moving and one resting state per cell.
        assert_eq!(doc.classes[0].spatial.states.len(), 200);
        assert!(doc.validate().is_ok());
        assert_eq!(dep.groups[0].count, 20);
        crate::text::parse_property(dep.property.as_deref().unwrap()).unwrap();
    }

    #[test]
    fn capacity_and_degenerate_grids() {
        let grid = GridSpec::gradient(2, 2, 22.0, 36.0);
        assert!(matches!(
            gen_honeybee(&grid, 5, BeeStart::Scattered, 10.0, None),
            Err(HoneybeeError::Capacity { .. })
        ));

        // A single cell is trivially the warmest; the lone robot sits on it.
        let tiny = GridSpec::gradient(1, 1, 30.0, 30.0);
        let (doc, dep) = gen_honeybee(&tiny, 1, BeeStart::Scattered, 10.0, None).unwrap();
        assert_eq!(tiny.optimal_cell(), 0);
        assert!(doc.validate().is_ok());
        assert!(matches!(
            &dep.groups[0].initial,
            crate::text::InitialPlacement::Categorical(d) if d.len() == 1
        ));
    }

    #[test]
    fn round_trips() {
        let grid = GridSpec::gradient(3, 3, 22.0, 36.0);
        let (doc, _) = gen_honeybee(&grid, 4, BeeStart::AllAtTemperature(30.0), 50.0, None).unwrap();
        let text = crate::text::serialize_model(&doc);
        assert_eq!(doc, parse_model(&text).unwrap());
    }
}
