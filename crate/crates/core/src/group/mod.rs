//! Group backends and element arithmetic.
//!
//! Three concrete families are supported: integer lattices Z^d, the discrete
//! Heisenberg group H3(Z), and free products of copies of Z/2Z. Elements are
//! kept in a canonical form per backend (coordinate vector, triple, reduced
//! word), so equality and hashing are structural.

mod ball;

pub use ball::{ball, growth_profile, open_ball, Ball, GrowthProfile, WordMetric};

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Default cap on enumerated elements for ball and kernel computations.
pub const DEFAULT_MEMORY_CAP: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendId {
    Lattice,
    Heisenberg,
    FreeProductZ2,
}

/// Group description as accepted on the wire and from config files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub backend: BackendId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arity: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<Vec<i64>>>,
}

impl GroupSpec {
    pub fn lattice(dim: usize) -> Self {
        GroupSpec { backend: BackendId::Lattice, dim: Some(dim), arity: None, generators: None }
    }

    pub fn lattice_with_generators(dim: usize, generators: Vec<Vec<i64>>) -> Self {
        GroupSpec {
            backend: BackendId::Lattice,
            dim: Some(dim),
            arity: None,
            generators: Some(generators),
        }
    }

    pub fn heisenberg() -> Self {
        GroupSpec { backend: BackendId::Heisenberg, dim: None, arity: None, generators: None }
    }

    pub fn free_product_z2(arity: usize) -> Self {
        GroupSpec {
            backend: BackendId::FreeProductZ2,
            dim: None,
            arity: Some(arity),
            generators: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Lattice { dim: usize },
    Heisenberg,
    FreeProductZ2 { arity: usize },
}

/// Group element in canonical form. Word letters are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroupElement {
    Lattice(SmallVec<[i64; 6]>),
    Heisenberg([i64; 3]),
    Word(SmallVec<[u8; 16]>),
}

impl GroupElement {
    pub fn lattice(coords: &[i64]) -> Self {
        GroupElement::Lattice(SmallVec::from_slice(coords))
    }

    pub fn heisenberg(a: i64, b: i64, c: i64) -> Self {
        GroupElement::Heisenberg([a, b, c])
    }

    /// Builds a reduced word, cancelling adjacent equal letters.
    pub fn word(letters: &[u8]) -> Self {
        let mut w: SmallVec<[u8; 16]> = SmallVec::new();
        for &l in letters {
            if w.last() == Some(&l) {
                w.pop();
            } else {
                w.push(l);
            }
        }
        GroupElement::Word(w)
    }

    /// Stable byte encoding used for hashing into stream ids and for export.
    pub fn write_canonical_bytes(&self, out: &mut Vec<u8>) {
        match self {
            GroupElement::Lattice(v) => {
                out.push(b'L');
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            GroupElement::Heisenberg(t) => {
                out.push(b'H');
                for x in t {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            GroupElement::Word(w) => {
                out.push(b'W');
                out.extend_from_slice(w);
            }
        }
    }

    /// Compact text form for CSV export: coordinates or letters joined by ';'.
    pub fn encode(&self) -> String {
        match self {
            GroupElement::Lattice(v) => {
                v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
            }
            GroupElement::Heisenberg(t) => {
                t.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
            }
            GroupElement::Word(w) => {
                w.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
            }
        }
    }
}

#[derive(Debug)]
pub struct GroupPresentation {
    backend: Backend,
    generators: Vec<GroupElement>,
    identity_in_generators: bool,
    spec: GroupSpec,
}

/// Validates a specification and constructs the group.
///
/// The generator list must be non-empty, duplicate free, and closed under
/// inversion. Listing the identity is allowed but flagged, since it turns the
/// walk lazy.
pub fn make_group(spec: &GroupSpec) -> Result<GroupPresentation> {
    let backend = match spec.backend {
        BackendId::Lattice => {
            let dim = spec.dim.ok_or_else(|| {
                Error::InvalidGroupSpec("lattice backend requires `dim`".into())
            })?;
            if dim == 0 || dim > 16 {
                return Err(Error::InvalidGroupSpec(format!(
                    "lattice dimension {dim} outside supported range 1..=16"
                )));
            }
            Backend::Lattice { dim }
        }
        BackendId::Heisenberg => Backend::Heisenberg,
        BackendId::FreeProductZ2 => {
            let arity = spec
                .arity
                .or_else(|| spec.generators.as_ref().map(|g| g.len()))
                .ok_or_else(|| {
                    Error::InvalidGroupSpec("free_product_z2 backend requires `arity`".into())
                })?;
            if arity == 0 || arity > 250 {
                return Err(Error::InvalidGroupSpec(format!(
                    "free product arity {arity} outside supported range 1..=250"
                )));
            }
            Backend::FreeProductZ2 { arity }
        }
    };

    let generators = match &spec.generators {
        Some(rows) => rows
            .iter()
            .map(|row| parse_element(&backend, row))
            .collect::<Result<Vec<_>>>()?,
        None => default_generators(&backend),
    };

    if generators.is_empty() {
        return Err(Error::EmptyGeneratorSet);
    }
    for (i, g) in generators.iter().enumerate() {
        if generators[..i].contains(g) {
            return Err(Error::DuplicateGenerator(g.encode()));
        }
    }
    let group = GroupPresentation {
        identity_in_generators: false,
        backend,
        generators,
        spec: spec.clone(),
    };
    let id = group.identity();
    for g in &group.generators {
        let inv = group.inverse(g);
        if !group.generators.contains(&inv) {
            return Err(Error::NonSymmetricGenerators(g.encode()));
        }
    }
    let identity_in_generators = group.generators.contains(&id);
    Ok(GroupPresentation { identity_in_generators, ..group })
}

fn parse_element(backend: &Backend, row: &[i64]) -> Result<GroupElement> {
    match *backend {
        Backend::Lattice { dim } => {
            if row.len() != dim {
                return Err(Error::InvalidGroupSpec(format!(
                    "lattice generator {row:?} has length {}, expected {dim}",
                    row.len()
                )));
            }
            Ok(GroupElement::lattice(row))
        }
        Backend::Heisenberg => {
            if row.len() != 3 {
                return Err(Error::InvalidGroupSpec(format!(
                    "heisenberg generator {row:?} must be a triple"
                )));
            }
            Ok(GroupElement::heisenberg(row[0], row[1], row[2]))
        }
        Backend::FreeProductZ2 { arity } => {
            let mut letters = Vec::with_capacity(row.len());
            for &l in row {
                if l < 1 || l > arity as i64 {
                    return Err(Error::InvalidGroupSpec(format!(
                        "word generator {row:?} uses letter {l} outside 1..={arity}"
                    )));
                }
                letters.push(l as u8);
            }
            Ok(GroupElement::word(&letters))
        }
    }
}

/// Parses the ';'-joined text form produced by `GroupElement::encode`:
/// coordinates for the lattice and Heisenberg backends, 1-based letters for
/// reduced words. The empty string is the identity word.
pub fn decode_element(group: &GroupPresentation, text: &str) -> Result<GroupElement> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return match group.backend() {
            Backend::FreeProductZ2 { .. } => Ok(group.identity()),
            _ => Err(Error::InvalidParameter("empty element text".into())),
        };
    }
    let mut row = Vec::new();
    for part in trimmed.split(';') {
        let value: i64 = part.trim().parse().map_err(|_| {
            Error::InvalidParameter(format!("element component {part:?} is not an integer"))
        })?;
        row.push(value);
    }
    parse_element(group.backend(), &row)
}

fn default_generators(backend: &Backend) -> Vec<GroupElement> {
    match *backend {
        Backend::Lattice { dim } => {
            let mut gens = Vec::with_capacity(2 * dim);
            for i in 0..dim {
                for sign in [1i64, -1] {
                    let mut v = vec![0i64; dim];
                    v[i] = sign;
                    gens.push(GroupElement::lattice(&v));
                }
            }
            gens
        }
        Backend::Heisenberg => vec![
            GroupElement::heisenberg(1, 0, 0),
            GroupElement::heisenberg(-1, 0, 0),
            GroupElement::heisenberg(0, 1, 0),
            GroupElement::heisenberg(0, -1, 0),
        ],
        Backend::FreeProductZ2 { arity } => {
            (1..=arity as u8).map(|l| GroupElement::word(&[l])).collect()
        }
    }
}

impl GroupPresentation {
    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn generators(&self) -> &[GroupElement] {
        &self.generators
    }

    pub fn generator_count(&self) -> usize {
        self.generators.len()
    }

    /// True when the identity was explicitly listed as a generator.
    pub fn identity_in_generators(&self) -> bool {
        self.identity_in_generators
    }

    pub fn identity(&self) -> GroupElement {
        match self.backend {
            Backend::Lattice { dim } => GroupElement::Lattice(SmallVec::from_elem(0, dim)),
            Backend::Heisenberg => GroupElement::Heisenberg([0, 0, 0]),
            Backend::FreeProductZ2 { .. } => GroupElement::Word(SmallVec::new()),
        }
    }

    pub fn is_identity(&self, g: &GroupElement) -> bool {
        match g {
            GroupElement::Lattice(v) => v.iter().all(|&x| x == 0),
            GroupElement::Heisenberg(t) => *t == [0, 0, 0],
            GroupElement::Word(w) => w.is_empty(),
        }
    }

    pub fn multiply(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        let mut out = a.clone();
        self.multiply_in_place(&mut out, b);
        out
    }

    /// Right-multiplies `a` by `b` in place.
    pub fn multiply_in_place(&self, a: &mut GroupElement, b: &GroupElement) {
        match (a, b) {
            (GroupElement::Lattice(x), GroupElement::Lattice(y)) => {
                debug_assert_eq!(x.len(), y.len());
                for (xi, yi) in x.iter_mut().zip(y.iter()) {
                    *xi += yi;
                }
            }
            // (a1,b1,c1)(a2,b2,c2) = (a1+a2, b1+b2, c1+c2+a1*b2)
            (GroupElement::Heisenberg(x), GroupElement::Heisenberg(y)) => {
                x[2] += y[2] + x[0] * y[1];
                x[0] += y[0];
                x[1] += y[1];
            }
            (GroupElement::Word(x), GroupElement::Word(y)) => {
                for &l in y.iter() {
                    if x.last() == Some(&l) {
                        x.pop();
                    } else {
                        x.push(l);
                    }
                }
            }
            _ => panic!("group elements from different backends"),
        }
    }

    /// Right-multiplies `pos` by the generator with the given index.
    #[inline]
    pub fn apply_generator(&self, pos: &mut GroupElement, idx: usize) {
        self.multiply_in_place(pos, &self.generators[idx]);
    }

    pub fn inverse(&self, g: &GroupElement) -> GroupElement {
        match g {
            GroupElement::Lattice(v) => GroupElement::Lattice(v.iter().map(|x| -x).collect()),
            // (a,b,c)^-1 = (-a, -b, ab - c)
            GroupElement::Heisenberg([a, b, c]) => {
                GroupElement::Heisenberg([-a, -b, a * b - c])
            }
            GroupElement::Word(w) => GroupElement::Word(w.iter().rev().copied().collect()),
        }
    }

    /// Index of each generator's inverse within the generator list.
    pub fn inverse_generator_indices(&self) -> Vec<usize> {
        self.generators
            .iter()
            .map(|g| {
                let inv = self.inverse(g);
                self.generators.iter().position(|h| *h == inv).expect("closed under inversion")
            })
            .collect()
    }

    /// True when the generators are exactly the 2*dim unit vectors.
    pub fn has_standard_lattice_generators(&self) -> bool {
        match self.backend {
            Backend::Lattice { dim } => {
                if self.generators.len() != 2 * dim {
                    return false;
                }
                let std = default_generators(&self.backend);
                std.iter().all(|g| self.generators.contains(g))
            }
            _ => false,
        }
    }

    /// True when the generators are exactly the single-letter involutions.
    pub fn has_standard_free_product_generators(&self) -> bool {
        match self.backend {
            Backend::FreeProductZ2 { arity } => {
                self.generators.len() == arity
                    && (1..=arity as u8)
                        .all(|l| self.generators.contains(&GroupElement::word(&[l])))
            }
            _ => false,
        }
    }

    /// Nominal polynomial growth index when one is known for the backend;
    /// `None` for superpolynomial growth.
    pub fn nominal_growth_index(&self) -> Option<f64> {
        match self.backend {
            // Any finite symmetric generating set of Z^d has polynomial
            // growth of index dim.
            Backend::Lattice { dim } => Some(dim as f64),
            Backend::Heisenberg => Some(4.0),
            Backend::FreeProductZ2 { arity } => {
                if arity >= 3 {
                    None
                } else {
                    // One or two involutions generate a virtually-Z or finite
                    // group; both have index at most 1.
                    Some(1.0)
                }
            }
        }
    }
}

pub fn parse_group_spec(json: &str) -> Result<GroupSpec> {
    serde_json::from_str(json).map_err(|e| Error::InvalidGroupSpec(e.to_string()))
}
