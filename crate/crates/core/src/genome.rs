//! The heritable developmental program and its variation operators.
//!
//! A [`Genome`] fully determines one growth run: field dimensions, the
//! morphogen set (secretion, diffusion kernel, cross-inhibition), the
//! threshold rules for cell fates and axon growth, and the iteration budget.
//! All variation operators take an explicit random stream and return new
//! genomes; nothing is mutated in place.

use std::hash::{Hash, Hasher};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard upper bound on the number of morphogens a genome may carry.
pub const MAX_MORPHOGENS: usize = 13;
/// Hard upper bound on the development time of a genome.
pub const MAX_GROWTH_ITERATIONS: u32 = 1000;
/// Slack allowed on kernel sums after renormalisation.
const KERNEL_SUM_EPS: f64 = 1e-9;

/// Closed interval `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span<T> {
    pub min: T,
    pub max: T,
}

impl<T: PartialOrd + Copy> Span<T> {
    pub const fn new(min: T, max: T) -> Self {
        Span { min, max }
    }

    pub const fn fixed(value: T) -> Self {
        Span {
            min: value,
            max: value,
        }
    }

    pub fn contains(&self, value: T) -> bool {
        self.min <= value && value <= self.max
    }

    pub fn clamp(&self, value: T) -> T {
        if value < self.min {
            self.min
        } else if value > self.max {
            self.max
        } else {
            value
        }
    }

    fn check(&self, name: &str) -> Result<()> {
        if self.min <= self.max {
            Ok(())
        } else {
            Err(Error::Config(format!("{name}: min exceeds max")))
        }
    }
}

impl Span<f64> {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.random_range(self.min..=self.max)
    }
}

impl Span<usize> {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(self.min..=self.max)
    }
}

impl Span<u32> {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        rng.random_range(self.min..=self.max)
    }
}

/// Odd-sized, non-negative diffusion kernel stored row-major.
#[derive(Debug, Clone)]
pub struct Kernel {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(rows: usize, cols: usize, weights: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || rows.is_multiple_of(2) || cols.is_multiple_of(2) {
            return Err(Error::InvalidGenome(format!(
                "kernel dimensions must be odd and positive, got {rows}x{cols}"
            )));
        }
        if weights.len() != rows * cols {
            return Err(Error::InvalidGenome(format!(
                "kernel {rows}x{cols} needs {} weights, got {}",
                rows * cols,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidGenome(
                "kernel weights must be finite and non-negative".into(),
            ));
        }
        Ok(Kernel {
            rows,
            cols,
            weights,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidGenome("ragged kernel rows".into()));
        }
        Kernel::new(rows.len(), cols, rows.concat())
    }

    /// Square kernel with 1 at the centre.
    pub fn identity(size: usize) -> Self {
        let mut weights = vec![0.0; size * size];
        weights[size * size / 2] = 1.0;
        Kernel::new(size, size, weights).expect("identity kernel size must be odd")
    }

    /// Square kernel with all entries equal and summing to `sum`.
    pub fn uniform(size: usize, sum: f64) -> Self {
        let n = (size * size) as f64;
        Kernel::new(size, size, vec![sum / n; size * size]).expect("uniform kernel size must be odd")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.cols + col]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.weights.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    /// Scale down so the total mass is at most 1.
    fn renormalize(&mut self) {
        let sum = self.sum();
        if sum > 1.0 {
            self.weights.iter_mut().for_each(|w| *w /= sum);
        } else if sum == 0.0 {
            let centre = self.weights.len() / 2;
            self.weights[centre] = 1.0;
        }
    }

    fn random<R: Rng + ?Sized>(size: usize, bounds: &GenomeBounds, rng: &mut R) -> Self {
        let centre = size * size / 2;
        let mut weights: Vec<f64> = (0..size * size)
            .map(|i| {
                if i == centre {
                    0.0
                } else {
                    bounds.kernel_entry.sample(rng)
                }
            })
            .collect();
        let target = bounds.kernel_sum.sample(rng);
        let share = if size == 1 {
            1.0
        } else {
            bounds.kernel_centre_share.sample(rng)
        };
        let rim: f64 = weights.iter().sum();
        if rim > 0.0 {
            weights
                .iter_mut()
                .for_each(|w| *w *= (1.0 - share) * target / rim);
            weights[centre] = share * target;
        } else {
            weights[centre] = target;
        }
        Kernel {
            rows: size,
            cols: size,
            weights,
        }
    }
}

/// Secretion, diffusion and cross-inhibition of one morphogen.
#[derive(Debug, Clone)]
pub struct MorphogenSpec {
    pub secretion_progenitor: f64,
    pub secretion_neuron: f64,
    pub diffusion_kernel: Kernel,
    /// `inhibition_row[n]` is how strongly morphogen `n` suppresses this one.
    pub inhibition_row: Vec<f64>,
}

impl MorphogenSpec {
    fn random<R: Rng + ?Sized>(
        index: usize,
        count: usize,
        bounds: &GenomeBounds,
        rng: &mut R,
    ) -> Self {
        let secretion_progenitor = bounds.secretion.sample(rng);
        let secretion_neuron = bounds.secretion.sample(rng);
        let diffusion_kernel = Kernel::random(bounds.kernel_size, bounds, rng);
        let inhibition_row = (0..count)
            .map(|n| {
                if n != index && rng.random_bool(bounds.inhibition_density) {
                    bounds.inhibition.sample(rng)
                } else {
                    0.0
                }
            })
            .collect();
        MorphogenSpec {
            secretion_progenitor,
            secretion_neuron,
            diffusion_kernel,
            inhibition_row,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FateRules {
    pub division_morphogen: usize,
    pub division_threshold: f64,
    pub differentiation_morphogen: usize,
    pub differentiation_threshold: f64,
    pub axon_init_morphogen: usize,
    pub axon_init_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxonRules {
    pub guidance_morphogen: usize,
    pub connection_threshold: f64,
    pub max_length: u32,
}

/// Complete developmental program.
///
/// Equality and hashing are structural and bitwise over every real-valued
/// field, so two genomes compare equal exactly when they grow identically.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "GenomeDoc", try_from = "GenomeDoc")]
pub struct Genome {
    pub field_width: usize,
    pub field_height: usize,
    pub morphogens: Vec<MorphogenSpec>,
    pub fate_rules: FateRules,
    pub axon_rules: AxonRules,
    pub growth_iterations: u32,
}

impl Genome {
    pub fn morphogen_count(&self) -> usize {
        self.morphogens.len()
    }

    /// Check every structural invariant.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidGenome(msg));
        if self.field_width < 3 || self.field_height < 3 {
            return bad(format!(
                "field {}x{} is smaller than 3x3",
                self.field_width, self.field_height
            ));
        }
        let count = self.morphogens.len();
        if !(1..=MAX_MORPHOGENS).contains(&count) {
            return bad(format!("morphogen count {count} outside [1, {MAX_MORPHOGENS}]"));
        }
        if !(1..=MAX_GROWTH_ITERATIONS).contains(&self.growth_iterations) {
            return bad(format!(
                "growth iterations {} outside [1, {MAX_GROWTH_ITERATIONS}]",
                self.growth_iterations
            ));
        }
        for (m, spec) in self.morphogens.iter().enumerate() {
            for (name, rate) in [
                ("progenitor", spec.secretion_progenitor),
                ("neuron", spec.secretion_neuron),
            ] {
                if !rate.is_finite() || rate < 0.0 {
                    return bad(format!("morphogen {m}: {name} secretion {rate} is invalid"));
                }
            }
            let k = &spec.diffusion_kernel;
            if k.rows() > self.field_height || k.cols() > self.field_width {
                return bad(format!(
                    "morphogen {m}: kernel {}x{} larger than field",
                    k.rows(),
                    k.cols()
                ));
            }
            let sum = k.sum();
            if sum <= 0.0 || sum > 1.0 + KERNEL_SUM_EPS {
                return bad(format!("morphogen {m}: kernel sum {sum} outside (0, 1]"));
            }
            if spec.inhibition_row.len() != count {
                return bad(format!(
                    "morphogen {m}: inhibition row has {} entries, expected {count}",
                    spec.inhibition_row.len()
                ));
            }
            if spec
                .inhibition_row
                .iter()
                .any(|a| !a.is_finite() || !(0.0..=1.0).contains(a))
            {
                return bad(format!("morphogen {m}: inhibition entries must lie in [0, 1]"));
            }
            if spec.inhibition_row[m] != 0.0 {
                return bad(format!("morphogen {m}: self-inhibition must be 0"));
            }
        }
        let f = &self.fate_rules;
        let a = &self.axon_rules;
        for index in [
            f.division_morphogen,
            f.differentiation_morphogen,
            f.axon_init_morphogen,
            a.guidance_morphogen,
        ] {
            if index >= count {
                return bad(format!("morphogen index {index} out of range ({count} morphogens)"));
            }
        }
        for threshold in [
            f.division_threshold,
            f.differentiation_threshold,
            f.axon_init_threshold,
            a.connection_threshold,
        ] {
            if !threshold.is_finite() || threshold < 0.0 {
                return bad(format!("threshold {threshold} must be finite and non-negative"));
            }
        }
        if a.max_length == 0 || a.max_length as usize > self.field_width * self.field_height {
            return bad(format!(
                "axon max length {} outside [1, field area]",
                a.max_length
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("genome serialisation cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GenomeDoc = serde_json::from_str(text)?;
        Genome::try_from(doc)
    }

    /// Bring indices and dimensions back inside their invariants after
    /// recombination or a count change.
    fn repair(&mut self, bounds: &GenomeBounds) {
        let count = self.morphogens.len();
        for spec in &mut self.morphogens {
            spec.inhibition_row.resize_with(count, || 0.0);
        }
        for (m, spec) in self.morphogens.iter_mut().enumerate() {
            spec.inhibition_row[m] = 0.0;
        }
        let f = &mut self.fate_rules;
        f.division_morphogen %= count;
        f.differentiation_morphogen %= count;
        f.axon_init_morphogen %= count;
        self.axon_rules.guidance_morphogen %= count;

        let (kr, kc) = self.morphogens.iter().fold((1, 1), |(r, c), m| {
            (r.max(m.diffusion_kernel.rows()), c.max(m.diffusion_kernel.cols()))
        });
        let field = bounds.limits.field;
        self.field_width = field.clamp(self.field_width).max(kc).max(3);
        self.field_height = field.clamp(self.field_height).max(kr).max(3);
        let area = (self.field_width * self.field_height) as u32;
        self.axon_rules.max_length = self
            .axon_rules
            .max_length
            .clamp(1, area.min(bounds.limits.axon_max_length.max));
    }

    fn bit_fingerprint<H: Hasher>(&self, state: &mut H) {
        self.field_width.hash(state);
        self.field_height.hash(state);
        self.growth_iterations.hash(state);
        self.morphogens.len().hash(state);
        for m in &self.morphogens {
            m.secretion_progenitor.to_bits().hash(state);
            m.secretion_neuron.to_bits().hash(state);
            m.diffusion_kernel.rows.hash(state);
            m.diffusion_kernel.cols.hash(state);
            for w in &m.diffusion_kernel.weights {
                w.to_bits().hash(state);
            }
            for a in &m.inhibition_row {
                a.to_bits().hash(state);
            }
        }
        let f = &self.fate_rules;
        f.division_morphogen.hash(state);
        f.division_threshold.to_bits().hash(state);
        f.differentiation_morphogen.hash(state);
        f.differentiation_threshold.to_bits().hash(state);
        f.axon_init_morphogen.hash(state);
        f.axon_init_threshold.to_bits().hash(state);
        let a = &self.axon_rules;
        a.guidance_morphogen.hash(state);
        a.connection_threshold.to_bits().hash(state);
        a.max_length.hash(state);
    }
}

fn bits_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

impl PartialEq for Genome {
    fn eq(&self, other: &Self) -> bool {
        let scalars = |g: &Genome| {
            let f = &g.fate_rules;
            let a = &g.axon_rules;
            [
                f.division_threshold,
                f.differentiation_threshold,
                f.axon_init_threshold,
                a.connection_threshold,
            ]
        };
        self.field_width == other.field_width
            && self.field_height == other.field_height
            && self.growth_iterations == other.growth_iterations
            && self.fate_rules.division_morphogen == other.fate_rules.division_morphogen
            && self.fate_rules.differentiation_morphogen
                == other.fate_rules.differentiation_morphogen
            && self.fate_rules.axon_init_morphogen == other.fate_rules.axon_init_morphogen
            && self.axon_rules.guidance_morphogen == other.axon_rules.guidance_morphogen
            && self.axon_rules.max_length == other.axon_rules.max_length
            && bits_eq(&scalars(self), &scalars(other))
            && self.morphogens.len() == other.morphogens.len()
            && self.morphogens.iter().zip(&other.morphogens).all(|(a, b)| {
                bits_eq(
                    &[a.secretion_progenitor, a.secretion_neuron],
                    &[b.secretion_progenitor, b.secretion_neuron],
                ) && a.diffusion_kernel.rows == b.diffusion_kernel.rows
                    && a.diffusion_kernel.cols == b.diffusion_kernel.cols
                    && bits_eq(&a.diffusion_kernel.weights, &b.diffusion_kernel.weights)
                    && bits_eq(&a.inhibition_row, &b.inhibition_row)
            })
    }
}

impl Eq for Genome {}

impl Hash for Genome {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.bit_fingerprint(state);
    }
}

// ---------------------------------------------------------------------------
// JSON document form
// ---------------------------------------------------------------------------

const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct FieldDoc {
    width: usize,
    height: usize,
}

#[derive(Serialize, Deserialize)]
struct MorphogenDoc {
    sec_progenitor: f64,
    sec_neuron: f64,
    kernel: Vec<Vec<f64>>,
    inhibition: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenomeDoc {
    schema: u32,
    field: FieldDoc,
    morphogens: Vec<MorphogenDoc>,
    fates: FateRules,
    axon: AxonRules,
    iterations: u32,
}

impl From<Genome> for GenomeDoc {
    fn from(g: Genome) -> Self {
        GenomeDoc {
            schema: SCHEMA_VERSION,
            field: FieldDoc {
                width: g.field_width,
                height: g.field_height,
            },
            morphogens: g
                .morphogens
                .iter()
                .map(|m| MorphogenDoc {
                    sec_progenitor: m.secretion_progenitor,
                    sec_neuron: m.secretion_neuron,
                    kernel: m.diffusion_kernel.to_rows(),
                    inhibition: m.inhibition_row.clone(),
                })
                .collect(),
            fates: g.fate_rules,
            axon: g.axon_rules,
            iterations: g.growth_iterations,
        }
    }
}

impl TryFrom<GenomeDoc> for Genome {
    type Error = Error;

    fn try_from(doc: GenomeDoc) -> Result<Self> {
        if doc.schema != SCHEMA_VERSION {
            return Err(Error::InvalidGenome(format!(
                "unsupported genome schema {}",
                doc.schema
            )));
        }
        let morphogens = doc
            .morphogens
            .into_iter()
            .map(|m| {
                Ok(MorphogenSpec {
                    secretion_progenitor: m.sec_progenitor,
                    secretion_neuron: m.sec_neuron,
                    diffusion_kernel: Kernel::from_rows(&m.kernel)?,
                    inhibition_row: m.inhibition,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let genome = Genome {
            field_width: doc.field.width,
            field_height: doc.field.height,
            morphogens,
            fate_rules: doc.fates,
            axon_rules: doc.axon,
            growth_iterations: doc.iterations,
        };
        genome.validate()?;
        Ok(genome)
    }
}

// ---------------------------------------------------------------------------
// Bounds and random initialisation
// ---------------------------------------------------------------------------

/// Hard limits that every variation operator clamps to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenomeLimits {
    pub field: Span<usize>,
    pub morphogens: Span<usize>,
    pub growth_iterations: Span<u32>,
    pub secretion_max: f64,
    pub threshold_max: f64,
    pub axon_max_length: Span<u32>,
}

impl Default for GenomeLimits {
    fn default() -> Self {
        GenomeLimits {
            field: Span::new(3, 40),
            morphogens: Span::new(1, MAX_MORPHOGENS),
            growth_iterations: Span::new(1, MAX_GROWTH_ITERATIONS),
            secretion_max: 10.0,
            threshold_max: 20.0,
            axon_max_length: Span::new(1, 1600),
        }
    }
}

/// Ranges for random genome construction plus the hard limits used when
/// mutating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenomeBounds {
    pub field_width: Span<usize>,
    pub field_height: Span<usize>,
    pub morphogens: Span<usize>,
    pub growth_iterations: Span<u32>,
    /// Side length of the (square) diffusion kernels.
    pub kernel_size: usize,
    /// Raw kernel entries before scaling to `kernel_sum`.
    pub kernel_entry: Span<f64>,
    pub kernel_sum: Span<f64>,
    /// Fraction of each initial kernel's mass kept at its centre.
    pub kernel_centre_share: Span<f64>,
    pub secretion: Span<f64>,
    pub threshold: Span<f64>,
    pub inhibition: Span<f64>,
    /// Probability that an off-diagonal inhibition entry starts non-zero.
    pub inhibition_density: f64,
    pub axon_max_length: Span<u32>,
    pub limits: GenomeLimits,
}

impl Default for GenomeBounds {
    fn default() -> Self {
        GenomeBounds {
            field_width: Span::fixed(20),
            field_height: Span::fixed(20),
            morphogens: Span::fixed(3),
            growth_iterations: Span::fixed(200),
            kernel_size: 3,
            kernel_entry: Span::new(0.0, 1.0),
            kernel_sum: Span::fixed(1.0),
            kernel_centre_share: Span::new(0.5, 1.0),
            secretion: Span::new(0.0, 1.0),
            threshold: Span::new(0.0, 2.0),
            inhibition: Span::new(0.0, 1.0),
            inhibition_density: 0.17,
            axon_max_length: Span::new(1, 20),
            limits: GenomeLimits::default(),
        }
    }
}

impl GenomeBounds {
    /// Defaults with a fixed initial field size.
    pub fn with_field(width: usize, height: usize) -> Self {
        GenomeBounds {
            field_width: Span::fixed(width),
            field_height: Span::fixed(height),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.field_width.check("field_width")?;
        self.field_height.check("field_height")?;
        self.morphogens.check("morphogens")?;
        self.growth_iterations.check("growth_iterations")?;
        self.kernel_entry.check("kernel_entry")?;
        self.kernel_sum.check("kernel_sum")?;
        self.kernel_centre_share.check("kernel_centre_share")?;
        if self.kernel_centre_share.min < 0.0 || self.kernel_centre_share.max > 1.0 {
            return Err(Error::Config("kernel_centre_share must lie within [0, 1]".into()));
        }
        self.secretion.check("secretion")?;
        self.threshold.check("threshold")?;
        self.inhibition.check("inhibition")?;
        self.axon_max_length.check("axon_max_length")?;
        let l = &self.limits;
        l.field.check("limits.field")?;
        l.morphogens.check("limits.morphogens")?;
        l.growth_iterations.check("limits.growth_iterations")?;
        l.axon_max_length.check("limits.axon_max_length")?;

        let cfg = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.kernel_size.is_multiple_of(2) || self.kernel_size == 0 {
            return cfg("kernel_size must be odd and positive");
        }
        if l.field.min < 3 || l.field.min < self.kernel_size {
            return cfg("limits.field.min must be at least 3 and at least kernel_size");
        }
        if !(l.field.contains(self.field_width.min) && l.field.contains(self.field_width.max))
            || !(l.field.contains(self.field_height.min)
                && l.field.contains(self.field_height.max))
        {
            return cfg("initial field range outside limits.field");
        }
        if l.morphogens.min < 1 || l.morphogens.max > MAX_MORPHOGENS {
            return cfg("limits.morphogens must lie within [1, 13]");
        }
        if !(l.morphogens.contains(self.morphogens.min) && l.morphogens.contains(self.morphogens.max))
        {
            return cfg("initial morphogen range outside limits.morphogens");
        }
        if l.growth_iterations.min < 1 || l.growth_iterations.max > MAX_GROWTH_ITERATIONS {
            return cfg("limits.growth_iterations must lie within [1, 1000]");
        }
        if !(l.growth_iterations.contains(self.growth_iterations.min)
            && l.growth_iterations.contains(self.growth_iterations.max))
        {
            return cfg("initial growth iterations outside limits");
        }
        if self.kernel_entry.min < 0.0 || !self.kernel_entry.max.is_finite() {
            return cfg("kernel_entry must be non-negative and finite");
        }
        if self.kernel_sum.min <= 0.0 || self.kernel_sum.max > 1.0 {
            return cfg("kernel_sum must lie within (0, 1]");
        }
        if self.secretion.min < 0.0 || self.secretion.max > l.secretion_max {
            return cfg("secretion range must lie within [0, limits.secretion_max]");
        }
        if self.threshold.min < 0.0 || self.threshold.max > l.threshold_max {
            return cfg("threshold range must lie within [0, limits.threshold_max]");
        }
        if self.inhibition.min < 0.0 || self.inhibition.max > 1.0 {
            return cfg("inhibition range must lie within [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.inhibition_density) {
            return cfg("inhibition_density must lie within [0, 1]");
        }
        if self.axon_max_length.min < 1 || l.axon_max_length.min < 1 {
            return cfg("axon max length must be at least 1");
        }
        Ok(())
    }

    fn random_morphogens<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<MorphogenSpec> {
        (0..count)
            .map(|m| MorphogenSpec::random(m, count, self, rng))
            .collect()
    }
}

/// Draw a genome uniformly from `bounds`.
pub fn random_genome<R: Rng + ?Sized>(bounds: &GenomeBounds, rng: &mut R) -> Result<Genome> {
    bounds.validate()?;
    let field_width = bounds.field_width.sample(rng);
    let field_height = bounds.field_height.sample(rng);
    let count = bounds.morphogens.sample(rng);
    let growth_iterations = bounds.growth_iterations.sample(rng);
    let morphogens = bounds.random_morphogens(count, rng);
    let fate_rules = FateRules {
        division_morphogen: rng.random_range(0..count),
        division_threshold: bounds.threshold.sample(rng),
        differentiation_morphogen: rng.random_range(0..count),
        differentiation_threshold: bounds.threshold.sample(rng),
        axon_init_morphogen: rng.random_range(0..count),
        axon_init_threshold: bounds.threshold.sample(rng),
    };
    let axon_rules = AxonRules {
        guidance_morphogen: rng.random_range(0..count),
        connection_threshold: bounds.threshold.sample(rng),
        max_length: bounds.axon_max_length.sample(rng),
    };
    let mut genome = Genome {
        field_width,
        field_height,
        morphogens,
        fate_rules,
        axon_rules,
        growth_iterations,
    };
    genome.repair(bounds);
    debug_assert!(genome.validate().is_ok());
    Ok(genome)
}

// ---------------------------------------------------------------------------
// Crossover
// ---------------------------------------------------------------------------

fn pick<'a, T, R: Rng + ?Sized>(a: &'a T, b: &'a T, rng: &mut R) -> &'a T {
    if rng.random_bool(0.5) {
        a
    } else {
        b
    }
}

/// Recombine two parents into one child.
///
/// With equal morphogen counts, secretion rates are mixed element-wise,
/// inhibition rows are taken whole from either parent and each diffusion
/// kernel comes intact from one parent. Otherwise the complete morphogen list
/// of one parent is inherited. Scalar fields are always drawn per field.
pub fn crossover<R: Rng + ?Sized>(
    a: &Genome,
    b: &Genome,
    bounds: &GenomeBounds,
    rng: &mut R,
) -> Genome {
    let field_width = *pick(&a.field_width, &b.field_width, rng);
    let field_height = *pick(&a.field_height, &b.field_height, rng);
    let growth_iterations = *pick(&a.growth_iterations, &b.growth_iterations, rng);

    let (fa, fb) = (&a.fate_rules, &b.fate_rules);
    let fate_rules = FateRules {
        division_morphogen: *pick(&fa.division_morphogen, &fb.division_morphogen, rng),
        division_threshold: *pick(&fa.division_threshold, &fb.division_threshold, rng),
        differentiation_morphogen: *pick(
            &fa.differentiation_morphogen,
            &fb.differentiation_morphogen,
            rng,
        ),
        differentiation_threshold: *pick(
            &fa.differentiation_threshold,
            &fb.differentiation_threshold,
            rng,
        ),
        axon_init_morphogen: *pick(&fa.axon_init_morphogen, &fb.axon_init_morphogen, rng),
        axon_init_threshold: *pick(&fa.axon_init_threshold, &fb.axon_init_threshold, rng),
    };
    let (xa, xb) = (&a.axon_rules, &b.axon_rules);
    let axon_rules = AxonRules {
        guidance_morphogen: *pick(&xa.guidance_morphogen, &xb.guidance_morphogen, rng),
        connection_threshold: *pick(&xa.connection_threshold, &xb.connection_threshold, rng),
        max_length: *pick(&xa.max_length, &xb.max_length, rng),
    };

    let morphogens = if a.morphogens.len() == b.morphogens.len() {
        a.morphogens
            .iter()
            .zip(&b.morphogens)
            .map(|(ma, mb)| MorphogenSpec {
                secretion_progenitor: *pick(&ma.secretion_progenitor, &mb.secretion_progenitor, rng),
                secretion_neuron: *pick(&ma.secretion_neuron, &mb.secretion_neuron, rng),
                inhibition_row: pick(&ma.inhibition_row, &mb.inhibition_row, rng).clone(),
                diffusion_kernel: pick(&ma.diffusion_kernel, &mb.diffusion_kernel, rng).clone(),
            })
            .collect()
    } else {
        pick(&a.morphogens, &b.morphogens, rng).clone()
    };

    let mut child = Genome {
        field_width,
        field_height,
        morphogens,
        fate_rules,
        axon_rules,
        growth_iterations,
    };
    child.repair(bounds);
    child
}

// ---------------------------------------------------------------------------
// Mutation
// ---------------------------------------------------------------------------

/// The five ordinary mutation types, in the order of the probability vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    GridSize,
    GrowthSteps,
    Parameter,
    MorphogenCount,
    Matrix,
}

impl MutationKind {
    pub const ALL: [MutationKind; 5] = [
        MutationKind::GridSize,
        MutationKind::GrowthSteps,
        MutationKind::Parameter,
        MutationKind::MorphogenCount,
        MutationKind::Matrix,
    ];

    /// Draw a kind according to `probs` (same order as [`MutationKind::ALL`]).
    pub fn sample<R: Rng + ?Sized>(probs: &[f64; 5], rng: &mut R) -> MutationKind {
        let total: f64 = probs.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (kind, p) in Self::ALL.iter().zip(probs) {
            if u < *p {
                return *kind;
            }
            u -= p;
        }
        // Rounding can leave u marginally above the last bucket.
        *Self::ALL
            .iter()
            .zip(probs)
            .rev()
            .find(|(_, p)| **p > 0.0)
            .map(|(k, _)| k)
            .unwrap_or(&MutationKind::Parameter)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MutationConfig {
    /// Probabilities of grid size, growth steps, parameter, morphogen count
    /// and matrix mutations.
    pub type_probs: [f64; 5],
    pub radical_prob: f64,
    pub grid_delta: usize,
    pub steps_delta: u32,
    pub morphogen_delta: usize,
    /// Share of parameter mutations that scale a real value; the rest nudge
    /// an integer.
    pub float_param_share: f64,
    pub int_param_delta: u32,
    pub scale: Span<f64>,
    pub radical_morphogens: Span<usize>,
    pub radical_iterations: Span<u32>,
}

impl Default for MutationConfig {
    fn default() -> Self {
        MutationConfig {
            type_probs: [0.15, 0.15, 0.45, 0.10, 0.15],
            radical_prob: 0.05,
            grid_delta: 3,
            steps_delta: 20,
            morphogen_delta: 2,
            float_param_share: 0.9,
            int_param_delta: 1,
            scale: Span::new(0.5, 2.0),
            radical_morphogens: Span::new(3, 13),
            radical_iterations: Span::new(100, 1000),
        }
    }
}

impl MutationConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.type_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return cfg("mutation type probabilities must lie in [0, 1]");
        }
        if (self.type_probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return cfg("mutation type probabilities must sum to 1");
        }
        if !(0.0..=1.0).contains(&self.radical_prob) || !(0.0..=1.0).contains(&self.float_param_share)
        {
            return cfg("mutation probabilities must lie in [0, 1]");
        }
        if self.grid_delta == 0 || self.steps_delta == 0 || self.morphogen_delta == 0 {
            return cfg("mutation deltas must be positive");
        }
        self.scale.check("mutation.scale")?;
        self.radical_morphogens.check("mutation.radical_morphogens")?;
        self.radical_iterations.check("mutation.radical_iterations")?;
        if self.scale.min < 0.0 {
            return cfg("mutation scale must be non-negative");
        }
        Ok(())
    }
}

/// Result of one call to [`mutate`].
#[derive(Debug, Clone)]
pub struct MutationOutcome {
    pub genome: Genome,
    pub kind: Option<MutationKind>,
    pub radical: bool,
}

/// Signed non-zero integer in `[-delta, delta]`.
fn signed_delta<R: Rng + ?Sized>(delta: i64, rng: &mut R) -> i64 {
    let magnitude = rng.random_range(1..=delta);
    if rng.random_bool(0.5) {
        magnitude
    } else {
        -magnitude
    }
}

fn shift_usize(value: usize, delta: i64, limits: Span<usize>) -> usize {
    let shifted = (value as i64 + delta).max(0) as usize;
    limits.clamp(shifted)
}

fn shift_u32(value: u32, delta: i64, limits: Span<u32>) -> u32 {
    let shifted = (value as i64 + delta).clamp(0, u32::MAX as i64) as u32;
    limits.clamp(shifted)
}

/// Possibly mutate `genome`.
///
/// One ordinary mutation fires with probability `min(1, base_rate *
/// multiplier)`; a radical mutation is drawn independently.
pub fn mutate<R: Rng + ?Sized>(
    genome: &Genome,
    multiplier: f64,
    base_rate: f64,
    config: &MutationConfig,
    bounds: &GenomeBounds,
    rng: &mut R,
) -> MutationOutcome {
    let rate = (base_rate * multiplier).clamp(0.0, 1.0);
    let mut out = genome.clone();
    let mut kind = None;
    if rng.random_bool(rate) {
        let k = MutationKind::sample(&config.type_probs, rng);
        out = apply_mutation(&out, k, config, bounds, rng);
        kind = Some(k);
    }
    let radical = rng.random_bool(config.radical_prob);
    if radical {
        out = radical_mutation(&out, config, bounds, rng);
    }
    MutationOutcome {
        genome: out,
        kind,
        radical,
    }
}

/// Apply one mutation of the given kind unconditionally.
pub fn apply_mutation<R: Rng + ?Sized>(
    genome: &Genome,
    kind: MutationKind,
    config: &MutationConfig,
    bounds: &GenomeBounds,
    rng: &mut R,
) -> Genome {
    let mut g = genome.clone();
    let limits = &bounds.limits;
    match kind {
        MutationKind::GridSize => {
            let d = config.grid_delta as i64;
            let dw = signed_delta(d, rng);
            let dh = signed_delta(d, rng);
            g.field_width = shift_usize(g.field_width, dw, limits.field);
            g.field_height = shift_usize(g.field_height, dh, limits.field);
        }
        MutationKind::GrowthSteps => {
            let d = signed_delta(config.steps_delta as i64, rng);
            g.growth_iterations = shift_u32(g.growth_iterations, d, limits.growth_iterations);
        }
        MutationKind::Parameter => {
            if rng.random_bool(config.float_param_share) {
                mutate_real_parameter(&mut g, config, limits, rng);
            } else {
                mutate_integer_parameter(&mut g, config, limits, rng);
            }
        }
        MutationKind::MorphogenCount => {
            let d = signed_delta(config.morphogen_delta as i64, rng);
            let count = shift_usize(g.morphogens.len(), d, limits.morphogens);
            resize_morphogens(&mut g, count, bounds, rng);
        }
        MutationKind::Matrix => {
            let count = g.morphogens.len();
            let factor = config.scale.sample(rng);
            if count >= 2 && rng.random_bool(0.5) {
                let m = rng.random_range(0..count);
                let mut n = rng.random_range(0..count - 1);
                if n >= m {
                    n += 1;
                }
                let entry = &mut g.morphogens[m].inhibition_row[n];
                *entry = (*entry * factor).clamp(0.0, 1.0);
            } else {
                let m = rng.random_range(0..count);
                let kernel = &mut g.morphogens[m].diffusion_kernel;
                let i = rng.random_range(0..kernel.weights.len());
                kernel.weights[i] *= factor;
                kernel.renormalize();
            }
        }
    }
    g.repair(bounds);
    g
}

fn mutate_real_parameter<R: Rng + ?Sized>(
    g: &mut Genome,
    config: &MutationConfig,
    limits: &GenomeLimits,
    rng: &mut R,
) {
    // Secretion rates (two per morphogen) followed by the four thresholds.
    let secretions = 2 * g.morphogens.len();
    let slot = rng.random_range(0..secretions + 4);
    let factor = config.scale.sample(rng);
    if slot < secretions {
        let spec = &mut g.morphogens[slot / 2];
        let rate = if slot % 2 == 0 {
            &mut spec.secretion_progenitor
        } else {
            &mut spec.secretion_neuron
        };
        *rate = (*rate * factor).clamp(0.0, limits.secretion_max);
    } else {
        let threshold = match slot - secretions {
            0 => &mut g.fate_rules.division_threshold,
            1 => &mut g.fate_rules.differentiation_threshold,
            2 => &mut g.fate_rules.axon_init_threshold,
            _ => &mut g.axon_rules.connection_threshold,
        };
        *threshold = (*threshold * factor).clamp(0.0, limits.threshold_max);
    }
}

fn mutate_integer_parameter<R: Rng + ?Sized>(
    g: &mut Genome,
    config: &MutationConfig,
    limits: &GenomeLimits,
    rng: &mut R,
) {
    let d = config.int_param_delta as i64;
    let delta = if rng.random_bool(0.5) { d } else { -d };
    let index_span = Span::new(0, g.morphogens.len() - 1);
    match rng.random_range(0..5) {
        0 => {
            let f = &mut g.fate_rules;
            f.division_morphogen = shift_usize(f.division_morphogen, delta, index_span);
        }
        1 => {
            let f = &mut g.fate_rules;
            f.differentiation_morphogen = shift_usize(f.differentiation_morphogen, delta, index_span);
        }
        2 => {
            let f = &mut g.fate_rules;
            f.axon_init_morphogen = shift_usize(f.axon_init_morphogen, delta, index_span);
        }
        3 => {
            let a = &mut g.axon_rules;
            a.guidance_morphogen = shift_usize(a.guidance_morphogen, delta, index_span);
        }
        _ => {
            let a = &mut g.axon_rules;
            a.max_length = shift_u32(a.max_length, delta, limits.axon_max_length);
        }
    }
}

fn resize_morphogens<R: Rng + ?Sized>(
    g: &mut Genome,
    count: usize,
    bounds: &GenomeBounds,
    rng: &mut R,
) {
    let old = g.morphogens.len();
    if count < old {
        g.morphogens.truncate(count);
        for spec in &mut g.morphogens {
            spec.inhibition_row.truncate(count);
        }
    } else if count > old {
        for spec in &mut g.morphogens {
            for _ in old..count {
                spec.inhibition_row.push(bounds.inhibition.sample(rng));
            }
        }
        for m in old..count {
            g.morphogens.push(MorphogenSpec::random(m, count, bounds, rng));
        }
    }
}

/// Re-draw the whole morphogen set (count included) and the growth budget.
pub fn radical_mutation<R: Rng + ?Sized>(
    genome: &Genome,
    config: &MutationConfig,
    bounds: &GenomeBounds,
    rng: &mut R,
) -> Genome {
    let mut g = genome.clone();
    let count = bounds
        .limits
        .morphogens
        .clamp(config.radical_morphogens.sample(rng));
    g.morphogens = bounds.random_morphogens(count, rng);
    g.fate_rules.division_morphogen = rng.random_range(0..count);
    g.fate_rules.differentiation_morphogen = rng.random_range(0..count);
    g.fate_rules.axon_init_morphogen = rng.random_range(0..count);
    g.axon_rules.guidance_morphogen = rng.random_range(0..count);
    g.growth_iterations = bounds
        .limits
        .growth_iterations
        .clamp(config.radical_iterations.sample(rng));
    g.repair(bounds);
    g
}
