//! Code space, fibers, point-fibered testing, the coding-map diagram and the
//! chaos game.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::Ifs;
use crate::geometry::{CellSet, Grid, Point};
use crate::{Error, Result};

/// Seed used when a scenario does not set one.
pub const DEFAULT_SEED: u64 = 0xC0FFEE;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// How an address continues past its prefix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extension {
    RepeatLast,
    /// Letters drawn from a seeded hash; `offset` counts letters already shifted away.
    Pseudorandom { seed: u64, offset: u64 },
}

/// An infinite word `σ₁σ₂σ₃…` over the letters `1..=N`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Address {
    alphabet: usize,
    prefix: Vec<usize>,
    extension: Extension,
}

impl Address {
    pub fn new(alphabet: usize, prefix: Vec<usize>, extension: Extension) -> Result<Address> {
        if alphabet == 0 {
            return Err(Error::Config("address alphabet must be nonempty".into()));
        }
        if let Some(&bad) = prefix.iter().find(|&&l| l == 0 || l > alphabet) {
            return Err(Error::Config(format!("letter {bad} is outside 1..={alphabet}")));
        }
        if prefix.is_empty() && extension == Extension::RepeatLast {
            return Err(Error::Config("a repeating address needs a nonempty prefix".into()));
        }
        Ok(Address {
            alphabet,
            prefix,
            extension,
        })
    }

    /// The address `prefix` followed by its last letter forever.
    pub fn repeating(alphabet: usize, prefix: &[usize]) -> Result<Address> {
        Address::new(alphabet, prefix.to_vec(), Extension::RepeatLast)
    }

    pub fn pseudorandom(alphabet: usize, seed: u64) -> Result<Address> {
        Address::new(alphabet, Vec::new(), Extension::Pseudorandom { seed, offset: 0 })
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    /// Letter `σ_k` for `k ≥ 1`.
    pub fn letter(&self, k: usize) -> usize {
        assert!(k >= 1, "address letters are numbered from 1");
        if k <= self.prefix.len() {
            return self.prefix[k - 1];
        }
        match self.extension {
            Extension::RepeatLast => *self.prefix.last().unwrap(),
            Extension::Pseudorandom { seed, offset } => {
                let j = (k - self.prefix.len()) as u64 + offset;
                1 + (splitmix64(seed ^ splitmix64(j)) % self.alphabet as u64) as usize
            }
        }
    }

    /// `σ|k`.
    pub fn word(&self, depth: usize) -> Vec<usize> {
        (1..=depth).map(|k| self.letter(k)).collect()
    }

    /// `nσ`.
    pub fn prepend(&self, letter: usize) -> Result<Address> {
        let mut prefix = vec![letter];
        prefix.extend_from_slice(&self.prefix);
        Address::new(self.alphabet, prefix, self.extension)
    }

    /// Drops the first letter.
    pub fn shift(&self) -> Address {
        let mut next = self.clone();
        if self.prefix.len() > 1 || (self.prefix.len() == 1 && self.extension != Extension::RepeatLast) {
            next.prefix.remove(0);
        } else if let Extension::Pseudorandom { seed, offset } = self.extension {
            next.extension = Extension::Pseudorandom { seed, offset: offset + 1 };
        }
        next
    }
}

/// `2^{-k}` for the least index `k ≤ depth` where the addresses differ, else 0.
pub fn code_distance(a: &Address, b: &Address, depth: usize) -> f64 {
    (1..=depth)
        .find(|&k| a.letter(k) != b.letter(k))
        .map_or(0.0, |k| 0.5f64.powi(k as i32))
}

/// `f_{σ₁}(f_{σ₂}(…f_{σ_depth}(x)…))`; the innermost letter is applied first.
pub fn fiber(ifs: &Ifs, sigma: &Address, depth: usize, x: &Point) -> Result<Point> {
    check_alphabet(ifs, sigma)?;
    let mut p = *x;
    for k in (1..=depth).rev() {
        p = ifs.eval(sigma.letter(k) - 1, &p)?;
    }
    Ok(p)
}

fn check_alphabet(ifs: &Ifs, sigma: &Address) -> Result<()> {
    if sigma.alphabet() != ifs.len() {
        return Err(Error::Config(format!(
            "address over {} letters used with an IFS of {} maps",
            sigma.alphabet(),
            ifs.len()
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FiberVerdict {
    PointFibered,
    NotPointFibered,
    Inconclusive,
}

impl FiberVerdict {
    pub fn name(self) -> &'static str {
        match self {
            FiberVerdict::PointFibered => "point_fibered",
            FiberVerdict::NotPointFibered => "not_point_fibered",
            FiberVerdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiberWitness {
    pub word: Vec<usize>,
    pub points: (Point, Point),
    pub diameter: f64,
    pub previous: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiberOptions {
    pub addresses: usize,
    pub points: usize,
    pub depth: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for FiberOptions {
    fn default() -> Self {
        FiberOptions {
            addresses: 32,
            points: 16,
            depth: 40,
            tol: 1e-6,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiberReport {
    pub addresses: usize,
    pub points: usize,
    pub depth: usize,
    pub tol: f64,
    /// Entry `k` is the largest diameter of `f_{σ|k}(start set)` over sampled addresses.
    pub diameters: Vec<f64>,
    pub verdict: FiberVerdict,
    pub witness: Option<FiberWitness>,
}

/// Start points spread over `region`: centers of evenly spaced cells, then
/// sub-cell samples when the region has fewer cells than requested points.
pub fn region_points(grid: &Grid, region: &CellSet, n: usize) -> Vec<Point> {
    let cells: Vec<usize> = region.iter().collect();
    if cells.is_empty() || n == 0 {
        return Vec::new();
    }
    if cells.len() >= n {
        return (0..n).map(|i| grid.center(cells[i * cells.len() / n])).collect();
    }
    let s = ((n as f64 / cells.len() as f64).sqrt().ceil() as usize).max(2);
    let all: Vec<Point> = cells.iter().flat_map(|&c| grid.sample_points(c, s)).collect();
    (0..n).map(|i| all[i * all.len() / n]).collect()
}

fn diameter(grid: &Grid, pts: &[Point]) -> Result<(f64, usize, usize)> {
    let mut best = (0.0, 0, 0);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = grid.space().distance(&pts[i], &pts[j])?;
            if d > best.0 {
                best = (d, i, j);
            }
        }
    }
    Ok(best)
}

struct AddressRun {
    word: Vec<usize>,
    table: Vec<f64>,
    pair: (Point, Point),
}

/// Samples addresses and start points and tracks how fast the images
/// `f_{σ|k}(start set)` shrink.
pub fn point_fibered_test(ifs: &Ifs, grid: &Grid, region: &CellSet, opts: &FiberOptions) -> Result<FiberReport> {
    if region.is_empty() {
        return Err(Error::Config("point-fibered test needs a nonempty region".into()));
    }
    if opts.addresses < 2 || opts.points < 2 || opts.depth < 1 {
        return Err(Error::Config(
            "point-fibered test needs at least 2 addresses, 2 points and depth 1".into(),
        ));
    }
    let starts = region_points(grid, region, opts.points);
    let runs: Vec<Result<AddressRun>> = (0..opts.addresses)
        .into_par_iter()
        .map(|i| {
            let sigma = Address::pseudorandom(ifs.len(), splitmix64(opts.seed ^ splitmix64(i as u64)))?;
            let word = sigma.word(opts.depth);
            let mut table = Vec::with_capacity(opts.depth + 1);
            let mut pair = (starts[0], starts[1]);
            for k in 0..=opts.depth {
                let imgs: Vec<Point> = starts
                    .iter()
                    .map(|x| fiber(ifs, &sigma, k, x))
                    .collect::<Result<_>>()?;
                let (d, a, b) = diameter(grid, &imgs)?;
                table.push(d);
                if k == opts.depth {
                    pair = (imgs[a], imgs[b]);
                }
            }
            Ok(AddressRun { word, table, pair })
        })
        .collect();
    let runs: Vec<AddressRun> = runs.into_iter().collect::<Result<_>>()?;
    let diameters: Vec<f64> = (0..=opts.depth)
        .map(|k| runs.iter().map(|r| r.table[k]).fold(0.0, f64::max))
        .collect();
    let d = opts.depth;
    let verdict;
    let mut witness = None;
    if runs.iter().all(|r| r.table[d] < opts.tol) {
        verdict = FiberVerdict::PointFibered;
    } else if let Some(r) = runs
        .iter()
        .find(|r| r.table[d] >= opts.tol && r.table[d] >= (1.0 - 1e-9) * r.table[d - 1])
    {
        verdict = FiberVerdict::NotPointFibered;
        witness = Some(FiberWitness {
            word: r.word.clone(),
            points: r.pair,
            diameter: r.table[d],
            previous: r.table[d - 1],
        });
    } else {
        verdict = FiberVerdict::Inconclusive;
    }
    Ok(FiberReport {
        addresses: opts.addresses,
        points: starts.len(),
        depth: opts.depth,
        tol: opts.tol,
        diameters,
        verdict,
        witness,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommuteRow {
    pub word: Vec<usize>,
    pub letter: usize,
    pub distance: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommuteReport {
    pub depth: usize,
    pub tol: f64,
    pub rows: Vec<CommuteRow>,
    pub pass: bool,
}

/// Compares `fiber(nσ, depth, x)` with `f_n(fiber(σ, depth, y))` for two
/// different start points. Both are `f_n ∘ f_{σ|depth-1}` applied to points of
/// the region, so their distance is bounded by `Lip(f_n)` times the measured
/// fiber diameter at `depth - 1`.
pub fn coding_commute_check(
    ifs: &Ifs,
    grid: &Grid,
    region: &CellSet,
    fibers: &FiberReport,
    addresses: usize,
    tol: f64,
    seed: u64,
) -> Result<CommuteReport> {
    if fibers.verdict != FiberVerdict::PointFibered {
        return Err(Error::Contract(format!(
            "coding map check needs a point-fibered system; the fiber report says {} (depth {}, final diameter {:e})",
            fibers.verdict.name(),
            fibers.depth,
            fibers.diameters.last().copied().unwrap_or(f64::NAN)
        )));
    }
    let depth = fibers.depth;
    let pts = region_points(grid, region, 2);
    let (x, y) = (&pts[0], &pts[pts.len() - 1]);
    let truncation = fibers.diameters[depth - 1];
    let mut rows = Vec::new();
    for i in 0..addresses {
        let sigma = Address::pseudorandom(ifs.len(), splitmix64(seed.wrapping_add(i as u64)))?;
        let inner = fiber(ifs, &sigma, depth, y)?;
        for n in 1..=ifs.len() {
            let lhs = fiber(ifs, &sigma.prepend(n)?, depth, x)?;
            let rhs = ifs.eval(n - 1, &inner)?;
            let lip = ifs.lipschitz_estimate(n - 1, grid, region).value;
            rows.push(CommuteRow {
                word: sigma.word(8),
                letter: n,
                distance: grid.space().distance(&lhs, &rhs)?,
                bound: lip * truncation,
            });
        }
    }
    let pass = rows.iter().all(|r| r.distance <= tol + r.bound);
    Ok(CommuteReport { depth, tol, rows, pass })
}

/// Random-letter iteration; returns the points after `burn_in` steps.
pub fn chaos_game(ifs: &Ifs, x0: &Point, n_steps: usize, burn_in: usize, seed: u64) -> Result<Vec<Point>> {
    Ok(chaos_game_labelled(ifs, x0, n_steps, burn_in, seed)?
        .into_iter()
        .map(|(_, p)| p)
        .collect())
}

/// As [`chaos_game`], with the 1-based letter of the map that produced each point.
pub fn chaos_game_labelled(
    ifs: &Ifs,
    x0: &Point,
    n_steps: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Vec<(usize, Point)>> {
    if n_steps <= burn_in {
        return Err(Error::Config(format!(
            "chaos game needs more steps ({n_steps}) than burn-in ({burn_in})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ifs.space().canonical(x0)?;
    let mut out = Vec::with_capacity(n_steps - burn_in);
    for step in 0..n_steps {
        let n = rng.gen_range(0..ifs.len());
        p = ifs.eval(n, &p)?;
        if step >= burn_in {
            out.push((n + 1, p));
        }
    }
    Ok(out)
}
