//! Dyadic grids on the unit box, grid-aligned box families and their
//! overlap components.

use std::collections::{BTreeMap, HashSet};

use petgraph::unionfind::UnionFind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{construction, domain, Error, Result};
use crate::stats::pairwise_mean;

pub const MAX_AMBIENT_DIM: usize = 4;
pub const DEFAULT_ATOM_CAP: usize = 1 << 20;

/// `[0,1)^n` split into `2^L` atoms per axis. Atoms are numbered with axis 0
/// varying fastest.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    level: u32,
    alpha: Option<Vec<usize>>,
}

impl Grid {
    pub fn new(n: usize, level: u32, alpha: Option<Vec<usize>>) -> Result<Grid> {
        Grid::with_cap(n, level, alpha, DEFAULT_ATOM_CAP)
    }

    pub fn with_cap(n: usize, level: u32, alpha: Option<Vec<usize>>, cap: usize) -> Result<Grid> {
        if !(1..=MAX_AMBIENT_DIM).contains(&n) {
            return Err(construction(format!("ambient dimension {n} outside 1..={MAX_AMBIENT_DIM}")));
        }
        let atoms = 1u128 << (level as u128 * n as u128).min(127);
        if level > 30 || atoms > cap as u128 {
            return Err(construction(format!("grid with n = {n}, L = {level} exceeds the atom cap {cap}")));
        }
        if let Some(a) = &alpha {
            if a.is_empty() || a.contains(&0) || a.iter().sum::<usize>() != n {
                return Err(construction(format!("partition {a:?} must have positive entries summing to {n}")));
            }
        }
        Ok(Grid { n, level, alpha })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn alpha(&self) -> Option<&[usize]> {
        self.alpha.as_deref()
    }

    /// Same grid with a different partition.
    pub fn with_alpha(&self, alpha: Option<Vec<usize>>) -> Result<Grid> {
        Grid::new(self.n, self.level, alpha)
    }

    /// Same atoms (partitions may differ).
    pub fn same_atoms(&self, o: &Grid) -> bool {
        self.n == o.n && self.level == o.level
    }

    /// Atoms per axis.
    pub fn side(&self) -> usize {
        1 << self.level
    }

    pub fn atom_count(&self) -> usize {
        self.side().pow(self.n as u32)
    }

    pub fn atom_index(&self, coords: &[usize]) -> usize {
        let m = self.side();
        coords.iter().rev().fold(0, |acc, &c| acc * m + c)
    }

    pub fn atom_coords(&self, mut idx: usize) -> Vec<usize> {
        let m = self.side();
        (0..self.n)
            .map(|_| {
                let c = idx % m;
                idx /= m;
                c
            })
            .collect()
    }

    /// Cell center in `[0,1)^n`.
    pub fn atom_center(&self, idx: usize) -> Vec<f64> {
        let m = self.side() as f64;
        self.atom_coords(idx).into_iter().map(|c| (c as f64 + 0.5) / m).collect()
    }

    /// Axes belonging to each block of the partition (contiguous runs).
    pub fn blocks(&self) -> Option<Vec<Vec<usize>>> {
        let alpha = self.alpha.as_ref()?;
        let mut start = 0;
        Some(
            alpha
                .iter()
                .map(|&a| {
                    let b = (start..start + a).collect();
                    start += a;
                    b
                })
                .collect(),
        )
    }
}

/// Half-open box of atoms: axis `i` covers `lo[i]..hi[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridBox {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
}

impl GridBox {
    pub fn new(grid: &Grid, lo: Vec<usize>, hi: Vec<usize>) -> Result<GridBox> {
        if lo.len() != grid.n() || hi.len() != grid.n() {
            return Err(construction("box corners must have n coordinates"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l >= h || *h > grid.side()) {
            return Err(construction(format!("box {lo:?}..{hi:?} is empty or leaves the grid")));
        }
        Ok(GridBox { lo, hi })
    }

    pub fn whole(grid: &Grid) -> GridBox {
        GridBox { lo: vec![0; grid.n()], hi: vec![grid.side(); grid.n()] }
    }

    pub fn sides(&self) -> Vec<usize> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    /// Number of atoms.
    pub fn volume(&self) -> usize {
        self.sides().iter().product()
    }

    pub fn contains_coords(&self, c: &[usize]) -> bool {
        c.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| l <= x && x < h)
    }

    pub fn intersects(&self, o: &GridBox) -> bool {
        (0..self.lo.len()).all(|i| self.lo[i] < o.hi[i] && o.lo[i] < self.hi[i])
    }

    /// Atom indices in ascending order.
    pub fn atoms(&self, grid: &Grid) -> Vec<usize> {
        let n = grid.n();
        let mut out = Vec::with_capacity(self.volume());
        let mut c = self.lo.clone();
        loop {
            out.push(grid.atom_index(&c));
            let mut axis = 0;
            loop {
                c[axis] += 1;
                if c[axis] < self.hi[axis] {
                    break;
                }
                c[axis] = self.lo[axis];
                axis += 1;
                if axis == n {
                    return out;
                }
            }
        }
    }
}

impl Serialize for GridBox {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        (&self.lo, &self.hi).serialize(s)
    }
}

impl<'de> Deserialize<'de> for GridBox {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<GridBox, D::Error> {
        let (lo, hi) = <(Vec<usize>, Vec<usize>)>::deserialize(d)?;
        Ok(GridBox { lo, hi })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Dyadic,
    Cubes,
    Rectangles,
    /// Products of cubes in the blocks of the grid partition.
    Multiparam,
    /// Boxes in `R^3` with sides `(s, t, s t)`.
    Zygmund,
    /// An explicit list of boxes.
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnumerationMode {
    Exhaustive,
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnumerationCaps {
    /// Enumerate every admissible box while the count stays at or below this.
    pub exhaustive: usize,
    /// Sample size once the exhaustive count is exceeded.
    pub sample: usize,
    pub seed: u64,
}

impl Default for EnumerationCaps {
    fn default() -> Self {
        EnumerationCaps { exhaustive: 50_000, sample: 4_000, seed: 0 }
    }
}

/// Atoms slack allowed in the Zygmund side condition `|u - s t / 2^L| <= 1`.
pub const ZYGMUND_SLACK: usize = 1;

/// Overlap-equivalence class of boxes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Component {
    /// Indices into the basis box list, ascending.
    pub boxes: Vec<usize>,
    /// Atoms covered by the union of the boxes, ascending.
    pub atoms: Vec<usize>,
}

/// A finite family of boxes realizing a basis, with cached atom lists.
#[derive(Clone, Debug)]
pub struct BoxBasis {
    grid: Grid,
    kind: BasisKind,
    mode: EnumerationMode,
    seed: Option<u64>,
    boxes: Vec<GridBox>,
    box_atoms: Vec<Vec<u32>>,
    covering: Vec<Vec<u32>>,
    components: Vec<Component>,
}

impl PartialEq for BoxBasis {
    fn eq(&self, o: &Self) -> bool {
        self.grid == o.grid && self.kind == o.kind && self.mode == o.mode && self.boxes == o.boxes
    }
}

/// Is `b` a member of the `kind` family on `grid`?
pub fn is_admissible(grid: &Grid, kind: BasisKind, b: &GridBox) -> bool {
    let sides = b.sides();
    if !sides_admissible(grid, kind, &sides) {
        return false;
    }
    match kind {
        BasisKind::Dyadic => b.lo.iter().zip(&sides).all(|(l, s)| l % s == 0),
        _ => true,
    }
}

fn sides_admissible(grid: &Grid, kind: BasisKind, sides: &[usize]) -> bool {
    let m = grid.side();
    match kind {
        BasisKind::Dyadic => sides.iter().all(|s| *s == sides[0]) && sides[0].is_power_of_two(),
        BasisKind::Cubes => sides.iter().all(|s| *s == sides[0]),
        BasisKind::Rectangles | BasisKind::Custom => true,
        BasisKind::Multiparam => match grid.blocks() {
            Some(blocks) => blocks.iter().all(|bl| bl.iter().all(|&i| sides[i] == sides[bl[0]])),
            None => false,
        },
        BasisKind::Zygmund => {
            if grid.n() != 3 {
                return false;
            }
            let (s, t, u) = (sides[0] as f64, sides[1] as f64, sides[2] as f64);
            (u - s * t / m as f64).abs() <= ZYGMUND_SLACK as f64
        }
    }
}

/// Admissible side tuples with the number of placements of each.
fn side_tuples(grid: &Grid, kind: BasisKind) -> Vec<(Vec<usize>, usize)> {
    let n = grid.n();
    let m = grid.side();
    let mut out = Vec::new();
    let mut sides = vec![1usize; n];
    loop {
        if sides_admissible(grid, kind, &sides) {
            let placements = if kind == BasisKind::Dyadic {
                sides.iter().map(|s| m / s).product()
            } else {
                sides.iter().map(|s| m - s + 1).product()
            };
            out.push((sides.clone(), placements));
        }
        let mut axis = 0;
        loop {
            if axis == n {
                return out;
            }
            sides[axis] += 1;
            if sides[axis] <= m {
                break;
            }
            sides[axis] = 1;
            axis += 1;
        }
    }
}

fn placement(grid: &Grid, kind: BasisKind, sides: &[usize], mut k: usize) -> GridBox {
    let m = grid.side();
    let mut lo = Vec::with_capacity(sides.len());
    for &s in sides {
        if kind == BasisKind::Dyadic {
            let count = m / s;
            lo.push((k % count) * s);
            k /= count;
        } else {
            let count = m - s + 1;
            lo.push(k % count);
            k /= count;
        }
    }
    let hi = lo.iter().zip(sides).map(|(l, s)| l + s).collect();
    GridBox { lo, hi }
}

impl BoxBasis {
    /// Every box of the family, or a seeded volume-stratified sample when
    /// the family is larger than `caps.exhaustive`. Dyadic is always
    /// exhaustive.
    pub fn enumerate(grid: &Grid, kind: BasisKind, caps: &EnumerationCaps) -> Result<BoxBasis> {
        match kind {
            BasisKind::Zygmund if grid.n() != 3 => return Err(domain("the Zygmund basis needs n = 3")),
            BasisKind::Multiparam if grid.alpha().is_none() => {
                return Err(domain("the multiparameter basis needs a grid partition"))
            }
            BasisKind::Custom => return Err(domain("custom bases are built from explicit boxes")),
            _ => {}
        }
        let tuples = side_tuples(grid, kind);
        let total: usize = tuples.iter().map(|t| t.1).sum();
        let exhaustive = kind == BasisKind::Dyadic || total <= caps.exhaustive;
        let boxes = if exhaustive {
            let mut v = Vec::with_capacity(total);
            for (sides, count) in &tuples {
                v.extend((0..*count).map(|k| placement(grid, kind, sides, k)));
            }
            v
        } else {
            sample_boxes(grid, kind, &tuples, caps)
        };
        let mode = if exhaustive { EnumerationMode::Exhaustive } else { EnumerationMode::Sampled };
        let seed = (!exhaustive).then_some(caps.seed);
        Ok(BoxBasis::assemble(grid.clone(), kind, mode, seed, boxes))
    }

    /// Basis from an explicit list of boxes.
    pub fn from_boxes(grid: &Grid, boxes: Vec<GridBox>) -> Result<BoxBasis> {
        if boxes.is_empty() {
            return Err(construction("a basis needs at least one box"));
        }
        for b in &boxes {
            GridBox::new(grid, b.lo.clone(), b.hi.clone())?;
        }
        Ok(BoxBasis::assemble(grid.clone(), BasisKind::Custom, EnumerationMode::Exhaustive, None, boxes))
    }

    fn assemble(
        grid: Grid,
        kind: BasisKind,
        mode: EnumerationMode,
        seed: Option<u64>,
        mut boxes: Vec<GridBox>,
    ) -> BoxBasis {
        // Canonical order: larger boxes first, then by corner.
        boxes.sort_by(|a, b| b.volume().cmp(&a.volume()).then_with(|| a.cmp(b)));
        boxes.dedup();
        let box_atoms: Vec<Vec<u32>> =
            boxes.iter().map(|b| b.atoms(&grid).into_iter().map(|a| a as u32).collect()).collect();
        let mut covering = vec![Vec::new(); grid.atom_count()];
        for (bi, atoms) in box_atoms.iter().enumerate() {
            for &a in atoms {
                covering[a as usize].push(bi as u32);
            }
        }
        let components = components_from(&box_atoms, &covering);
        BoxBasis { grid, kind, mode, seed, boxes, box_atoms, covering, components }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn mode(&self) -> EnumerationMode {
        self.mode
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn boxes(&self) -> &[GridBox] {
        &self.boxes
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Atoms of box `i`, ascending.
    pub fn box_atoms(&self, i: usize) -> &[u32] {
        &self.box_atoms[i]
    }

    /// Boxes containing atom `a`, ascending.
    pub fn covering(&self, a: usize) -> &[u32] {
        &self.covering[a]
    }

    pub fn is_covered(&self, a: usize) -> bool {
        !self.covering[a].is_empty()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Sub-basis made of the boxes of the listed components.
    pub fn restrict_to_components(&self, keep: &[usize]) -> Result<BoxBasis> {
        let mut boxes = Vec::new();
        for &c in keep {
            let comp = self.components.get(c).ok_or_else(|| domain(format!("no component {c}")))?;
            boxes.extend(comp.boxes.iter().map(|&b| self.boxes[b].clone()));
        }
        BoxBasis::from_boxes(&self.grid, boxes)
    }

    /// Sub-basis of the listed boxes.
    pub fn subset(&self, keep: &[usize]) -> Result<BoxBasis> {
        BoxBasis::from_boxes(&self.grid, keep.iter().map(|&b| self.boxes[b].clone()).collect())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "kind": self.kind,
            "grid": {"n": self.grid.n(), "level": self.grid.level(), "alpha": self.grid.alpha()},
            "mode": self.mode,
            "seed": self.seed,
            "boxes": self.boxes,
        })
    }

    pub fn from_json(v: &Value) -> Result<BoxBasis> {
        #[derive(Deserialize)]
        struct GridSpec {
            n: usize,
            level: u32,
            alpha: Option<Vec<usize>>,
        }
        #[derive(Deserialize)]
        struct Raw {
            kind: BasisKind,
            grid: GridSpec,
            mode: Option<EnumerationMode>,
            seed: Option<u64>,
            boxes: Vec<GridBox>,
        }
        let raw: Raw = serde_json::from_value(v.clone()).map_err(|e| Error::Config(e.to_string()))?;
        let grid = Grid::new(raw.grid.n, raw.grid.level, raw.grid.alpha)?;
        for b in &raw.boxes {
            let b = GridBox::new(&grid, b.lo.clone(), b.hi.clone())?;
            if !is_admissible(&grid, raw.kind, &b) {
                return Err(construction(format!("box {b:?} is not a {:?} box", raw.kind)));
            }
        }
        if raw.boxes.is_empty() {
            return Err(construction("a basis needs at least one box"));
        }
        Ok(BoxBasis::assemble(grid, raw.kind, raw.mode.unwrap_or(EnumerationMode::Exhaustive), raw.seed, raw.boxes))
    }
}

fn components_from(box_atoms: &[Vec<u32>], covering: &[Vec<u32>]) -> Vec<Component> {
    let mut uf = UnionFind::<usize>::new(box_atoms.len());
    for boxes in covering {
        if let Some((&first, rest)) = boxes.split_first() {
            for &b in rest {
                uf.union(first as usize, b as usize);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for b in 0..box_atoms.len() {
        groups.entry(uf.find(b)).or_default().push(b);
    }
    let mut comps: Vec<Component> = groups
        .into_values()
        .map(|boxes| {
            let mut atoms: Vec<usize> = boxes.iter().flat_map(|&b| box_atoms[b].iter().map(|&a| a as usize)).collect();
            atoms.sort_unstable();
            atoms.dedup();
            Component { boxes, atoms }
        })
        .collect();
    comps.sort_by_key(|c| c.boxes[0]);
    comps
}

/// Overlap components of a basis.
pub fn basis_components(basis: &BoxBasis) -> Vec<Component> {
    basis.components().to_vec()
}

fn sample_boxes(grid: &Grid, kind: BasisKind, tuples: &[(Vec<usize>, usize)], caps: &EnumerationCaps) -> Vec<GridBox> {
    let mut strata: BTreeMap<u32, Vec<&(Vec<usize>, usize)>> = BTreeMap::new();
    for t in tuples {
        let vol: usize = t.0.iter().product();
        strata.entry(vol.ilog2()).or_default().push(t);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(caps.seed);
    let mut chosen: HashSet<GridBox> = HashSet::new();
    let mut remaining_strata = strata.len();
    let mut budget = caps.sample;
    for group in strata.values() {
        let size: usize = group.iter().map(|t| t.1).sum();
        let quota = (budget / remaining_strata).min(size);
        let before = chosen.len();
        if quota == size {
            for (sides, count) in group.iter().map(|t| (&t.0, t.1)) {
                chosen.extend((0..count).map(|k| placement(grid, kind, sides, k)));
            }
        } else {
            while chosen.len() - before < quota {
                let mut k = rng.gen_range(0..size);
                let (sides, idx) = group
                    .iter()
                    .find_map(|t| {
                        if k < t.1 {
                            Some((&t.0, k))
                        } else {
                            k -= t.1;
                            None
                        }
                    })
                    .expect("index within stratum");
                chosen.insert(placement(grid, kind, sides, idx));
            }
        }
        budget -= chosen.len() - before;
        remaining_strata -= 1;
    }
    let mut v: Vec<GridBox> = chosen.into_iter().collect();
    v.sort();
    v
}

/// Exact mean of per-atom values over a box (pairwise summation).
pub fn average_over_box(grid: &Grid, values: &[f64], b: &GridBox) -> f64 {
    let xs: Vec<f64> = b.atoms(grid).into_iter().map(|a| values[a]).collect();
    pairwise_mean(&xs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atom_numbering_round_trips() {
        let g = Grid::new(3, 2, None).unwrap();
        for a in 0..g.atom_count() {
            assert_eq!(g.atom_index(&g.atom_coords(a)), a);
        }
        assert_eq!(g.atom_coords(1), vec![1, 0, 0]);
    }

    #[test]
    fn box_atoms_match_membership() {
        let g = Grid::new(2, 2, None).unwrap();
        let b = GridBox::new(&g, vec![1, 0], vec![3, 2]).unwrap();
        let atoms = b.atoms(&g);
        let direct: Vec<usize> = (0..g.atom_count()).filter(|&a| b.contains_coords(&g.atom_coords(a))).collect();
        assert_eq!(atoms, direct);
    }

    #[test]
    fn atom_cap_is_enforced() {
        assert!(Grid::with_cap(2, 3, None, 63).is_err());
        assert!(Grid::with_cap(2, 3, None, 64).is_ok());
        assert!(Grid::new(2, 1, Some(vec![1, 2])).is_err());
    }
}
