//! Deterministic development of a genome into a [`GrownGraph`].
//!
//! Growth happens on a toroidal field that starts with one progenitor at the
//! centre and zero concentration everywhere. Each iteration runs six phases
//! in a fixed order: secretion, diffusion, inhibition, cell fates, axon
//! growth, weight rescaling. [`Development`] exposes every phase separately
//! so callers can observe the field between them; [`grow`] simply runs the
//! whole budget.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::genome::{Genome, Kernel};
use crate::graph::{GrownGraph, Position, MAX_WEIGHT, MIN_WEIGHT};

/// Concentration grid stored row-major (`y * width + x`).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(width: usize, height: usize) -> Self {
        Grid {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Contract(format!(
                "grid {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Grid {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Toroidal convolution of `grid` with `kernel`.
///
/// Mass at a cell is spread onto its neighbourhood with the kernel's layout,
/// so a unit impulse reproduces the kernel centred on the impulse.
pub fn diffuse(grid: &Grid, kernel: &Kernel) -> Result<Grid> {
    if kernel.rows() > grid.height || kernel.cols() > grid.width {
        return Err(Error::Config(format!(
            "kernel {}x{} larger than grid {}x{}",
            kernel.rows(),
            kernel.cols(),
            grid.width,
            grid.height
        )));
    }
    let mut out = Grid::zeros(grid.width, grid.height);
    convolve_into(&grid.data, grid.width, grid.height, kernel, &mut out.data);
    Ok(out)
}

fn convolve_into(src: &[f64], width: usize, height: usize, kernel: &Kernel, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let ry = kernel.rows() / 2;
    let rx = kernel.cols() / 2;
    for ky in 0..kernel.rows() {
        for kx in 0..kernel.cols() {
            let k = kernel.get(ky, kx);
            if k == 0.0 {
                continue;
            }
            // out(y, x) += k * src(y + ry - ky, x + rx - kx)
            let sy = (ry + height - ky) % height;
            let sx = (rx + width - kx) % width;
            for y in 0..height {
                let src_row = &src[((y + sy) % height) * width..][..width];
                let out_row = &mut out[y * width..][..width];
                let (head, tail) = out_row.split_at_mut(width - sx);
                for (o, s) in head.iter_mut().zip(&src_row[sx..]) {
                    *o += k * s;
                }
                for (o, s) in tail.iter_mut().zip(&src_row[..sx]) {
                    *o += k * s;
                }
            }
        }
    }
}

/// Occupant of a field position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Empty,
    Progenitor,
    Neuron(usize),
}

/// A growing axon probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveAxon {
    pub source_neuron: usize,
    pub head: Position,
    pub path_length: u32,
}

/// Snapshot of the field after a given number of iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub step: u32,
    pub concentrations: Vec<Grid>,
    pub cells: Vec<Cell>,
    pub width: usize,
    pub height: usize,
}

impl FieldSnapshot {
    /// Plain-text dump: a `step W H M` header, the M concentration grids
    /// row by row, then the cell grid (`.` empty, `P` progenitor, neuron id).
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "{} {} {} {}",
            self.step,
            self.width,
            self.height,
            self.concentrations.len()
        )?;
        for grid in &self.concentrations {
            for row in grid.data.chunks(self.width) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
        for row in self.cells.chunks(self.width) {
            let line: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Empty => ".".to_string(),
                    Cell::Progenitor => "P".to_string(),
                    Cell::Neuron(id) => id.to_string(),
                })
                .collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn dump_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_dump(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("dump is ASCII")
    }
}

/// Minimal toroidal Euclidean distance between two positions.
pub fn toroidal_distance(a: Position, b: Position, width: usize, height: usize) -> f64 {
    let dx = a.x.abs_diff(b.x);
    let dy = a.y.abs_diff(b.y);
    let dx = dx.min(width - dx) as f64;
    let dy = dy.min(height - dy) as f64;
    (dx * dx + dy * dy).sqrt()
}

/// Weight given to a freshly formed connection.
pub fn initial_weight(concentration: f64, distance: f64) -> f64 {
    (concentration / (1.0 + distance)).clamp(MIN_WEIGHT, MAX_WEIGHT)
}

/// Competitive weight from local vs. neighbourhood concentration, or `None`
/// when the neighbourhood is empty.
pub fn competitive_weight(local: f64, total: f64) -> Option<f64> {
    if total > 0.0 {
        Some((local / total).max(MIN_WEIGHT))
    } else {
        None
    }
}

/// Von Neumann neighbours on a torus in N, E, S, W order.
fn neighbours(p: Position, w: usize, h: usize) -> [Position; 4] {
    [
        Position {
            x: p.x,
            y: (p.y + h - 1) % h,
        },
        Position {
            x: (p.x + 1) % w,
            y: p.y,
        },
        Position {
            x: p.x,
            y: (p.y + 1) % h,
        },
        Position {
            x: (p.x + w - 1) % w,
            y: p.y,
        },
    ]
}

/// The six phases of one growth iteration, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Secretion,
    Diffusion,
    Inhibition,
    CellFates,
    Axons,
    Rescaling,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::Secretion,
        Phase::Diffusion,
        Phase::Inhibition,
        Phase::CellFates,
        Phase::Axons,
        Phase::Rescaling,
    ];
}

/// In-progress development of one genome.
#[derive(Debug, Clone)]
pub struct Development<'g> {
    genome: &'g Genome,
    width: usize,
    height: usize,
    concentrations: Vec<Grid>,
    cells: Vec<Cell>,
    axons: Vec<ActiveAxon>,
    has_axon: Vec<bool>,
    graph: GrownGraph,
    step: u32,
    scratch: Vec<f64>,
    inhibitors: Vec<Vec<(usize, f64)>>,
}

impl<'g> Development<'g> {
    /// Field with a single progenitor at `(width / 2, height / 2)`.
    pub fn new(genome: &'g Genome) -> Self {
        let mut dev = Self::blank(genome);
        let origin = Position {
            x: dev.width / 2,
            y: dev.height / 2,
        };
        dev.place_progenitor(origin);
        dev
    }

    /// Field with no cells at all.
    pub fn blank(genome: &'g Genome) -> Self {
        let (width, height) = (genome.field_width, genome.field_height);
        let inhibitors = genome
            .morphogens
            .iter()
            .map(|spec| {
                spec.inhibition_row
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| **a != 0.0)
                    .map(|(n, a)| (n, *a))
                    .collect()
            })
            .collect();
        Development {
            genome,
            width,
            height,
            concentrations: vec![Grid::zeros(width, height); genome.morphogens.len()],
            cells: vec![Cell::Empty; width * height],
            axons: Vec::new(),
            has_axon: Vec::new(),
            graph: GrownGraph::new(),
            step: 0,
            scratch: vec![0.0; width * height],
            inhibitors,
        }
    }

    fn index(&self, p: Position) -> usize {
        p.y * self.width + p.x
    }

    fn position(&self, index: usize) -> Position {
        Position {
            x: index % self.width,
            y: index / self.width,
        }
    }

    pub fn place_progenitor(&mut self, p: Position) {
        let i = self.index(p);
        assert_eq!(self.cells[i], Cell::Empty, "position {p:?} already occupied");
        self.cells[i] = Cell::Progenitor;
    }

    /// Put a neuron at `p` and register it as the next graph node.
    pub fn place_neuron(&mut self, p: Position) -> usize {
        let i = self.index(p);
        assert!(
            !matches!(self.cells[i], Cell::Neuron(_)),
            "position {p:?} already holds a neuron"
        );
        let id = self.graph.add_node(p);
        self.has_axon.push(false);
        self.cells[i] = Cell::Neuron(id);
        id
    }

    pub fn set_concentration(&mut self, morphogen: usize, p: Position, value: f64) {
        self.concentrations[morphogen].set(p.x, p.y, value);
    }

    pub fn concentration(&self, morphogen: usize, p: Position) -> f64 {
        self.concentrations[morphogen].get(p.x, p.y)
    }

    pub fn concentrations(&self) -> &[Grid] {
        &self.concentrations
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, p: Position) -> Cell {
        self.cells[self.index(p)]
    }

    pub fn axons(&self) -> &[ActiveAxon] {
        &self.axons
    }

    pub fn graph(&self) -> &GrownGraph {
        &self.graph
    }

    pub fn neuron_count(&self) -> usize {
        self.graph.node_count()
    }

    /// Completed iterations.
    pub fn step_index(&self) -> u32 {
        self.step
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.genome.growth_iterations
    }

    pub fn into_graph(self) -> GrownGraph {
        self.graph
    }

    pub fn snapshot(&self) -> FieldSnapshot {
        FieldSnapshot {
            step: self.step,
            concentrations: self.concentrations.clone(),
            cells: self.cells.clone(),
            width: self.width,
            height: self.height,
        }
    }

    /// One full iteration of all six phases.
    pub fn step(&mut self) {
        self.step_observed(|_, _| {});
    }

    /// [`Development::step`], calling `observer` after each phase.
    pub fn step_observed<F: FnMut(Phase, &Self)>(&mut self, mut observer: F) {
        for phase in Phase::ALL {
            match phase {
                Phase::Secretion => self.secrete(),
                Phase::Diffusion => self.diffuse(),
                Phase::Inhibition => self.inhibit(),
                Phase::CellFates => self.apply_cell_fates(),
                Phase::Axons => self.grow_axons(),
                Phase::Rescaling => self.rescale_weights(),
            }
            observer(phase, self);
        }
        self.step += 1;
    }

    pub fn run(&mut self) {
        while !self.is_finished() {
            self.step();
        }
    }

    /// Every occupied position adds its cell type's secretion rate.
    pub fn secrete(&mut self) {
        for (i, cell) in self.cells.iter().enumerate() {
            let neuron = match cell {
                Cell::Empty => continue,
                Cell::Progenitor => false,
                Cell::Neuron(_) => true,
            };
            for (grid, spec) in self.concentrations.iter_mut().zip(&self.genome.morphogens) {
                grid.data[i] += if neuron {
                    spec.secretion_neuron
                } else {
                    spec.secretion_progenitor
                };
            }
        }
    }

    pub fn diffuse(&mut self) {
        for (grid, spec) in self.concentrations.iter_mut().zip(&self.genome.morphogens) {
            if grid.data.iter().all(|v| *v == 0.0) {
                continue;
            }
            convolve_into(
                &grid.data,
                self.width,
                self.height,
                &spec.diffusion_kernel,
                &mut self.scratch,
            );
            std::mem::swap(&mut grid.data, &mut self.scratch);
        }
    }

    /// Multiplicative cross-inhibition evaluated from the pre-update values.
    pub fn inhibit(&mut self) {
        if self.inhibitors.iter().all(Vec::is_empty) {
            return;
        }
        let count = self.concentrations.len();
        let mut before = vec![0.0; count];
        for i in 0..self.cells.len() {
            for (m, grid) in self.concentrations.iter().enumerate() {
                before[m] = grid.data[i];
            }
            for m in 0..count {
                if before[m] == 0.0 {
                    continue;
                }
                let factor: f64 = self.inhibitors[m]
                    .iter()
                    .map(|&(n, alpha)| (1.0 - alpha * before[n]).max(0.0))
                    .product();
                self.concentrations[m].data[i] = before[m] * factor;
            }
        }
    }

    /// Division, differentiation and axon initiation, scanning row-major.
    ///
    /// Only cells present when the phase starts act; a daughter placed during
    /// the scan waits for the next iteration.
    pub fn apply_cell_fates(&mut self) {
        let fates = self.genome.fate_rules;
        let occupied: Vec<usize> = self
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != Cell::Empty)
            .map(|(i, _)| i)
            .collect();
        for i in occupied {
            let p = self.position(i);
            match self.cells[i] {
                Cell::Empty => unreachable!("snapshot only holds occupied cells"),
                Cell::Progenitor => {
                    let divide = self.concentrations[fates.division_morphogen].data[i]
                        >= fates.division_threshold;
                    let free = if divide {
                        neighbours(p, self.width, self.height)
                            .into_iter()
                            .find(|n| self.cells[self.index(*n)] == Cell::Empty)
                    } else {
                        None
                    };
                    if let Some(daughter) = free {
                        self.place_progenitor(daughter);
                    } else if self.concentrations[fates.differentiation_morphogen].data[i]
                        >= fates.differentiation_threshold
                    {
                        self.cells[i] = Cell::Empty;
                        self.place_neuron(p);
                    }
                }
                Cell::Neuron(id) => {
                    if !self.has_axon[id]
                        && self.concentrations[fates.axon_init_morphogen].data[i]
                            >= fates.axon_init_threshold
                    {
                        self.has_axon[id] = true;
                        self.axons.push(ActiveAxon {
                            source_neuron: id,
                            head: p,
                            path_length: 0,
                        });
                    }
                }
            }
        }
    }

    /// Advance every axon one cell up the guidance gradient, connecting or
    /// retiring as appropriate.
    pub fn grow_axons(&mut self) {
        let rules = self.genome.axon_rules;
        let (w, h) = (self.width, self.height);
        let guidance = &self.concentrations[rules.guidance_morphogen];
        let cells = &self.cells;
        let graph = &mut self.graph;
        let has_axon = &mut self.has_axon;
        self.axons.retain_mut(|axon| {
            let here = guidance.get(axon.head.x, axon.head.y);
            let mut best: Option<(Position, f64)> = None;
            for n in neighbours(axon.head, w, h) {
                let c = guidance.get(n.x, n.y);
                if c > best.map_or(here, |(_, b)| b) {
                    best = Some((n, c));
                }
            }
            let Some((next, c)) = best else {
                has_axon[axon.source_neuron] = false;
                return false;
            };
            axon.head = next;
            axon.path_length += 1;
            if let Cell::Neuron(target) = cells[next.y * w + next.x] {
                if target != axon.source_neuron && c >= rules.connection_threshold {
                    let source_pos = graph.positions()[axon.source_neuron];
                    let d = toroidal_distance(source_pos, next, w, h);
                    graph.add_edge(axon.source_neuron, target, initial_weight(c, d));
                    has_axon[axon.source_neuron] = false;
                    return false;
                }
            }
            if axon.path_length >= rules.max_length {
                has_axon[axon.source_neuron] = false;
                return false;
            }
            true
        });
    }

    /// Re-weight every edge by the guidance concentration at its target
    /// relative to the target's 3x3 neighbourhood.
    pub fn rescale_weights(&mut self) {
        let guidance = &self.concentrations[self.genome.axon_rules.guidance_morphogen];
        let (w, h) = (self.width, self.height);
        let positions = self.graph.positions().to_vec();
        for edge in self.graph.edges_mut() {
            let p = positions[edge.target];
            let local = guidance.get(p.x, p.y);
            let mut total = 0.0;
            for dy in [h - 1, 0, 1] {
                for dx in [w - 1, 0, 1] {
                    total += guidance.get((p.x + dx) % w, (p.y + dy) % h);
                }
            }
            if let Some(weight) = competitive_weight(local, total) {
                edge.weight = weight;
            }
        }
    }
}

/// Run the full developmental program.
pub fn grow(genome: &Genome) -> GrownGraph {
    let mut dev = Development::new(genome);
    dev.run();
    dev.into_graph()
}

/// Run development and capture the field after each listed iteration count
/// (0 is the initial state). Steps beyond the budget are ignored.
pub fn grow_traced(genome: &Genome, steps: &[u32]) -> (GrownGraph, Vec<FieldSnapshot>) {
    let mut dev = Development::new(genome);
    let mut wanted: Vec<u32> = steps.to_vec();
    wanted.sort_unstable();
    wanted.dedup();
    let mut snapshots = Vec::new();
    let mut next = wanted.into_iter().peekable();
    loop {
        while next.peek() == Some(&dev.step_index()) {
            snapshots.push(dev.snapshot());
            next.next();
        }
        if dev.is_finished() {
            break;
        }
        dev.step();
    }
    (dev.into_graph(), snapshots)
}
