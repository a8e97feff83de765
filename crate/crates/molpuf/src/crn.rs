//! Chemical reaction network representation and its text format.
//!
//! A [`Crn`] is an immutable-after-construction list of species and
//! reactions. Reactions are mass-action with a forward rate and an optional
//! reverse rate; reversible reactions are stored as a single entry carrying
//! both rates. Concentrations are in nM, time in seconds, so bimolecular
//! rates are per-nM-per-second and unimolecular rates are per-second.
//!
//! # Text format
//!
//! One reaction per line:
//!
//! ```text
//! # comments run to end of line; blank lines are ignored
//! A0 + B0 <-> R1 ; kf=16.2 ; kr=100000
//! Z'0 + Z1 -> Z0 ; kf=16
//! CLK0 + CLK0 -> R1 ; kf=15.5
//! ```
//!
//! Reactant and product terms are joined by `+`; stoichiometric
//! coefficients greater than one are written by repetition. Species are
//! declared implicitly on first use. Serialization prints every rate with
//! the shortest decimal form that parses back to the identical float, so
//! `parse(serialize(crn))` reproduces species names, stoichiometry and
//! rates exactly.
//!
//! # Naming convention
//!
//! Dual-rail signals use paired species `<signal>0` / `<signal>1`
//! (e.g. `Z0`/`Z1`). Per-instance copies carry an `@` suffix, with the rail
//! digit before the `@`: rail 1 of signal `A@s3t` is the species `A1@s3t`.
//! Rail pairs declared through [`Crn::declare_rail_pair`] are tracked so
//! that validation can confirm both rails of every declared signal exist;
//! the pairing metadata is derived bookkeeping and is not part of the text
//! format.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Maximum total reactant stoichiometry per reaction. Bimolecular is the
/// largest elementary step the intended substrate (strand displacement
/// cascades) can realize directly.
pub const MAX_REACTANT_STOICHIOMETRY: u32 = 2;

/// Index of a species within one [`Crn`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpeciesId(pub(crate) usize);

impl SpeciesId {
    /// Position of the species in declaration order.
    pub fn index(self) -> usize {
        self.0
    }

    /// Builds a handle from a raw index. The handle is meaningful only
    /// for the network the index refers to; no bounds check is applied.
    /// Intended for deserializers feeding [`Crn::from_parts`], which
    /// must always be paired with [`Crn::validate`].
    pub fn from_index(index: usize) -> Self {
        SpeciesId(index)
    }
}

/// Index of a reaction within one [`Crn`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReactionId(pub(crate) usize);

impl ReactionId {
    /// Position of the reaction in declaration order.
    pub fn index(self) -> usize {
        self.0
    }
}

/// One side entry of a reaction: a species together with its
/// stoichiometric coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Term {
    pub species: SpeciesId,
    pub coeff: u32,
}

/// A mass-action reaction. `kr` is `Some` exactly for reversible
/// reactions; both directions then share this single record.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub reactants: Vec<Term>,
    pub products: Vec<Term>,
    pub kf: f64,
    pub kr: Option<f64>,
}

impl Reaction {
    fn total_reactant_stoichiometry(&self) -> u32 {
        self.reactants.iter().map(|t| t.coeff).sum()
    }
}

/// Construction errors reported by [`Crn::add_species`] and
/// [`Crn::add_reaction`].
#[derive(Debug, Error, PartialEq)]
pub enum CrnError {
    #[error("invalid species name {name:?}: {reason}")]
    InvalidSpeciesName { name: String, reason: &'static str },
    #[error("species {0:?} is already declared")]
    DuplicateSpecies(String),
    #[error("species id {0} is not part of this network")]
    UnknownSpecies(usize),
    #[error("{which} rate must be positive and finite, got {value}")]
    InvalidRate { which: RateField, value: f64 },
    #[error("total reactant stoichiometry {total} exceeds the maximum of {MAX_REACTANT_STOICHIOMETRY}")]
    ReactantCapExceeded { total: u32 },
    #[error("a reaction side is empty")]
    EmptySide,
    #[error("stoichiometric coefficients must be at least 1")]
    ZeroCoefficient,
    #[error(
        "reaction duplicates reaction {existing}{}",
        if *swapped {
            " with sides swapped; store it as the reverse rate of the original"
        } else {
            "; merge the rates instead"
        }
    )]
    DuplicateReaction { existing: usize, swapped: bool },
}

/// Which rate constant of a reaction an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateField {
    Forward,
    Reverse,
}

impl fmt::Display for RateField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateField::Forward => write!(f, "forward"),
            RateField::Reverse => write!(f, "reverse"),
        }
    }
}

/// A chemical reaction network.
///
/// Built through [`Crn::add_species`] / [`Crn::add_reaction`] (which reject
/// ill-formed input) or assembled raw via [`Crn::from_parts`] (which does
/// not); [`Crn::validate`] re-checks every structural invariant and is the
/// companion of the raw path.
#[derive(Debug, Clone, Default)]
pub struct Crn {
    species: Vec<String>,
    by_name: BTreeMap<String, SpeciesId>,
    reactions: Vec<Reaction>,
    /// Declared dual-rail pairs: signal name -> (rail 0, rail 1).
    rail_pairs: BTreeMap<String, (SpeciesId, SpeciesId)>,
    /// Canonical (sorted) reaction sides -> index, used to reject
    /// duplicate entries at construction time.
    side_index: BTreeMap<(Vec<(usize, u32)>, Vec<(usize, u32)>), usize>,
}

/// Canonical form of one reaction side for duplicate detection: terms
/// sorted by species index.
fn canonical_side(terms: &[Term]) -> Vec<(usize, u32)> {
    let mut side: Vec<(usize, u32)> = terms.iter().map(|t| (t.species.0, t.coeff)).collect();
    side.sort_unstable();
    side
}

/// Species name for one rail of a dual-rail signal. The rail digit goes
/// before any `@` instance suffix: `rail_name("Z", 1) == "Z1"`,
/// `rail_name("A@s3t", 0) == "A0@s3t"`.
pub fn rail_name(signal: &str, rail: u8) -> String {
    debug_assert!(rail <= 1, "dual-rail signals have rails 0 and 1");
    match signal.find('@') {
        Some(at) => format!("{}{}{}", &signal[..at], rail, &signal[at..]),
        None => format!("{signal}{rail}"),
    }
}

fn check_species_name(name: &str) -> Result<(), CrnError> {
    let err = |reason| CrnError::InvalidSpeciesName {
        name: name.to_owned(),
        reason,
    };
    let mut chars = name.chars();
    match chars.next() {
        None => return Err(err("name is empty")),
        Some(c) if !c.is_ascii_alphabetic() => {
            return Err(err("name must start with an ASCII letter"))
        }
        Some(_) => {}
    }
    for c in chars {
        if !(c.is_ascii_alphanumeric() || c == '_' || c == '\'' || c == '@') {
            return Err(err("allowed characters are letters, digits, '_', '\\'' and '@'"));
        }
    }
    Ok(())
}

impl Crn {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a species. Names must be unique and drawn from the
    /// identifier charset described in the module docs.
    pub fn add_species(&mut self, name: &str) -> Result<SpeciesId, CrnError> {
        check_species_name(name)?;
        if self.by_name.contains_key(name) {
            return Err(CrnError::DuplicateSpecies(name.to_owned()));
        }
        let id = SpeciesId(self.species.len());
        self.species.push(name.to_owned());
        self.by_name.insert(name.to_owned(), id);
        Ok(id)
    }

    /// Declares a species if necessary and returns its id either way.
    pub fn ensure_species(&mut self, name: &str) -> Result<SpeciesId, CrnError> {
        match self.by_name.get(name) {
            Some(&id) => Ok(id),
            None => self.add_species(name),
        }
    }

    /// Declares both rails of a dual-rail signal and records the pairing.
    /// Idempotent for an already-declared signal.
    pub fn declare_rail_pair(&mut self, signal: &str) -> Result<(SpeciesId, SpeciesId), CrnError> {
        if let Some(&pair) = self.rail_pairs.get(signal) {
            return Ok(pair);
        }
        let lo = self.ensure_species(&rail_name(signal, 0))?;
        let hi = self.ensure_species(&rail_name(signal, 1))?;
        self.rail_pairs.insert(signal.to_owned(), (lo, hi));
        Ok((lo, hi))
    }

    /// Adds a reaction. `kr` of `Some` marks it reversible. Terms may
    /// repeat a species; coefficients are accumulated. A reaction whose
    /// sides match an existing entry — verbatim or swapped — is rejected:
    /// merge the rates, or express the backward direction through `kr`.
    pub fn add_reaction(
        &mut self,
        reactants: &[(SpeciesId, u32)],
        products: &[(SpeciesId, u32)],
        kf: f64,
        kr: Option<f64>,
    ) -> Result<ReactionId, CrnError> {
        if !(kf.is_finite() && kf > 0.0) {
            return Err(CrnError::InvalidRate {
                which: RateField::Forward,
                value: kf,
            });
        }
        if let Some(kr) = kr {
            if !(kr.is_finite() && kr > 0.0) {
                return Err(CrnError::InvalidRate {
                    which: RateField::Reverse,
                    value: kr,
                });
            }
        }
        let reactants = self.collect_terms(reactants)?;
        let products = self.collect_terms(products)?;
        let reaction = Reaction {
            reactants,
            products,
            kf,
            kr,
        };
        let total = reaction.total_reactant_stoichiometry();
        if total > MAX_REACTANT_STOICHIOMETRY {
            return Err(CrnError::ReactantCapExceeded { total });
        }
        let key = (
            canonical_side(&reaction.reactants),
            canonical_side(&reaction.products),
        );
        if let Some(&existing) = self.side_index.get(&key) {
            return Err(CrnError::DuplicateReaction {
                existing,
                swapped: false,
            });
        }
        let swapped_key = (key.1.clone(), key.0.clone());
        if let Some(&existing) = self.side_index.get(&swapped_key) {
            return Err(CrnError::DuplicateReaction {
                existing,
                swapped: true,
            });
        }
        let id = ReactionId(self.reactions.len());
        self.side_index.insert(key, id.0);
        self.reactions.push(reaction);
        Ok(id)
    }

    /// Accumulates raw (species, coeff) pairs into per-species terms,
    /// keeping first-mention order.
    fn collect_terms(&self, raw: &[(SpeciesId, u32)]) -> Result<Vec<Term>, CrnError> {
        if raw.is_empty() {
            return Err(CrnError::EmptySide);
        }
        let mut terms: Vec<Term> = Vec::with_capacity(raw.len());
        for &(species, coeff) in raw {
            if species.0 >= self.species.len() {
                return Err(CrnError::UnknownSpecies(species.0));
            }
            if coeff == 0 {
                return Err(CrnError::ZeroCoefficient);
            }
            match terms.iter_mut().find(|t| t.species == species) {
                Some(t) => t.coeff += coeff,
                None => terms.push(Term { species, coeff }),
            }
        }
        Ok(terms)
    }

    /// Assembles a network from raw parts without any checking. Intended
    /// for deserializers and for tests that need ill-formed networks;
    /// always pair with [`Crn::validate`].
    pub fn from_parts(
        species: Vec<String>,
        reactions: Vec<Reaction>,
        rail_pairs: BTreeMap<String, (SpeciesId, SpeciesId)>,
    ) -> Self {
        let by_name = species
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), SpeciesId(i)))
            .collect();
        let mut side_index = BTreeMap::new();
        for (i, r) in reactions.iter().enumerate() {
            let key = (canonical_side(&r.reactants), canonical_side(&r.products));
            side_index.entry(key).or_insert(i);
        }
        Self {
            species,
            by_name,
            reactions,
            rail_pairs,
            side_index,
        }
    }

    pub fn species_count(&self) -> usize {
        self.species.len()
    }

    pub fn reaction_count(&self) -> usize {
        self.reactions.len()
    }

    pub fn species_id(&self, name: &str) -> Option<SpeciesId> {
        self.by_name.get(name).copied()
    }

    /// Name of a species, or `None` for a foreign id.
    pub fn species_name(&self, id: SpeciesId) -> Option<&str> {
        self.species.get(id.0).map(String::as_str)
    }

    pub fn species_names(&self) -> impl Iterator<Item = &str> {
        self.species.iter().map(String::as_str)
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn reaction(&self, id: ReactionId) -> Option<&Reaction> {
        self.reactions.get(id.0)
    }

    /// Declared dual-rail pairs in name order.
    pub fn rail_pairs(&self) -> impl Iterator<Item = (&str, (SpeciesId, SpeciesId))> {
        self.rail_pairs.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Structural equality as carried by the text format: the same
    /// reaction list, with terms compared by species *name* (declaration
    /// order may differ between two equal networks) and rates compared
    /// bitwise. Species that appear in no reaction are not representable
    /// in the text format and are deliberately ignored here, as is the
    /// derived rail-pair bookkeeping.
    pub fn same_structure(&self, other: &Crn) -> bool {
        let name = |crn: &Crn, t: &Term| -> Option<(String, u32)> {
            crn.species_name(t.species).map(|n| (n.to_owned(), t.coeff))
        };
        let side = |crn: &Crn, terms: &[Term]| -> Option<Vec<(String, u32)>> {
            terms.iter().map(|t| name(crn, t)).collect()
        };
        self.reactions.len() == other.reactions.len()
            && self.reactions.iter().zip(&other.reactions).all(|(a, b)| {
                side(self, &a.reactants) == side(other, &b.reactants)
                    && side(self, &a.products) == side(other, &b.products)
                    && a.kf.to_bits() == b.kf.to_bits()
                    && a.kr.map(f64::to_bits) == b.kr.map(f64::to_bits)
            })
    }

    /// Checks every structural invariant and reports all violations.
    /// Networks built exclusively through the checked constructors always
    /// come back clean.
    pub fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        let mut seen = BTreeMap::new();
        for (i, name) in self.species.iter().enumerate() {
            if let Err(e) = check_species_name(name) {
                v.push(Violation::InvalidSpeciesName {
                    species: i,
                    message: e.to_string(),
                });
            }
            if let Some(&first) = seen.get(name.as_str()) {
                v.push(Violation::DuplicateSpeciesName {
                    first,
                    second: i,
                    name: name.clone(),
                });
            } else {
                seen.insert(name.as_str(), i);
            }
        }
        for (i, r) in self.reactions.iter().enumerate() {
            if r.reactants.is_empty() || r.products.is_empty() {
                v.push(Violation::EmptySide { reaction: i });
            }
            for t in r.reactants.iter().chain(&r.products) {
                if t.species.0 >= self.species.len() {
                    v.push(Violation::UnknownSpecies {
                        reaction: i,
                        species: t.species.0,
                    });
                }
                if t.coeff == 0 {
                    v.push(Violation::ZeroCoefficient { reaction: i });
                }
            }
            if !(r.kf.is_finite() && r.kf > 0.0) {
                v.push(Violation::InvalidRate {
                    reaction: i,
                    which: RateField::Forward,
                    value: r.kf,
                });
            }
            if let Some(kr) = r.kr {
                if !(kr.is_finite() && kr > 0.0) {
                    v.push(Violation::InvalidRate {
                        reaction: i,
                        which: RateField::Reverse,
                        value: kr,
                    });
                }
            }
            let total = r.total_reactant_stoichiometry();
            if total > MAX_REACTANT_STOICHIOMETRY {
                v.push(Violation::ReactantCapExceeded { reaction: i, total });
            }
        }
        self.check_duplicate_entries(&mut v);
        for (signal, &(lo, hi)) in &self.rail_pairs {
            for (rail, id) in [(0u8, lo), (1u8, hi)] {
                let want = rail_name(signal, rail);
                match self.species.get(id.0) {
                    Some(name) if *name == want => {}
                    Some(name) => v.push(Violation::BrokenRailPair {
                        signal: signal.clone(),
                        message: format!("rail {rail} points at {name:?}, expected {want:?}"),
                    }),
                    None => v.push(Violation::BrokenRailPair {
                        signal: signal.clone(),
                        message: format!("rail {rail} points at missing species id {}", id.0),
                    }),
                }
            }
        }
        ValidationReport { violations: v }
    }

    /// Flags reaction pairs that duplicate each other: either verbatim, or
    /// as a forward/backward pair that should have been stored as one
    /// reversible entry.
    fn check_duplicate_entries(&self, v: &mut Vec<Violation>) {
        fn sorted(terms: &[Term]) -> Vec<Term> {
            let mut s = terms.to_vec();
            s.sort_by_key(|t| t.species);
            s
        }
        let sides: Vec<(Vec<Term>, Vec<Term>)> = self
            .reactions
            .iter()
            .map(|r| (sorted(&r.reactants), sorted(&r.products)))
            .collect();
        for i in 0..sides.len() {
            for j in (i + 1)..sides.len() {
                if sides[i].0 == sides[j].0 && sides[i].1 == sides[j].1 {
                    v.push(Violation::DuplicateReaction { first: i, second: j });
                } else if sides[i].0 == sides[j].1 && sides[i].1 == sides[j].0 {
                    v.push(Violation::ReversePairDuplicate { first: i, second: j });
                }
            }
        }
    }

    /// Serializes to the text format. Rates print in their shortest exact
    /// decimal form, so parsing the output reproduces this network.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.reactions {
            self.push_side(&mut out, &r.reactants);
            out.push_str(if r.kr.is_some() { " <-> " } else { " -> " });
            self.push_side(&mut out, &r.products);
            out.push_str(&format!(" ; kf={}", r.kf));
            if let Some(kr) = r.kr {
                out.push_str(&format!(" ; kr={kr}"));
            }
            out.push('\n');
        }
        out
    }

    fn push_side(&self, out: &mut String, terms: &[Term]) {
        let mut first = true;
        for t in terms {
            for _ in 0..t.coeff {
                if !first {
                    out.push_str(" + ");
                }
                first = false;
                let name = self
                    .species
                    .get(t.species.0)
                    .map(String::as_str)
                    .unwrap_or("<unknown>");
                out.push_str(name);
            }
        }
    }

    /// Parses the text format. Species are declared in first-mention
    /// order. Comments (`#` to end of line) and blank lines are ignored.
    pub fn from_text(text: &str) -> Result<Crn, ParseError> {
        let mut crn = Crn::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            if line.trim().is_empty() {
                continue;
            }
            parse_reaction_line(&mut crn, line, lineno + 1)?;
        }
        Ok(crn)
    }
}

/// Outcome of [`Crn::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// One structural defect found by [`Crn::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    InvalidSpeciesName {
        species: usize,
        message: String,
    },
    DuplicateSpeciesName {
        first: usize,
        second: usize,
        name: String,
    },
    UnknownSpecies {
        reaction: usize,
        species: usize,
    },
    ZeroCoefficient {
        reaction: usize,
    },
    EmptySide {
        reaction: usize,
    },
    InvalidRate {
        reaction: usize,
        which: RateField,
        value: f64,
    },
    ReactantCapExceeded {
        reaction: usize,
        total: u32,
    },
    DuplicateReaction {
        first: usize,
        second: usize,
    },
    ReversePairDuplicate {
        first: usize,
        second: usize,
    },
    BrokenRailPair {
        signal: String,
        message: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::InvalidSpeciesName { species, message } => {
                write!(f, "species {species}: {message}")
            }
            Violation::DuplicateSpeciesName { first, second, name } => write!(
                f,
                "species {second} duplicates the name {name:?} of species {first}"
            ),
            Violation::UnknownSpecies { reaction, species } => write!(
                f,
                "reaction {reaction} references unregistered species id {species}"
            ),
            Violation::ZeroCoefficient { reaction } => {
                write!(f, "reaction {reaction} has a zero stoichiometric coefficient")
            }
            Violation::EmptySide { reaction } => {
                write!(f, "reaction {reaction} has an empty side")
            }
            Violation::InvalidRate {
                reaction,
                which,
                value,
            } => write!(
                f,
                "reaction {reaction}: {which} rate {value} is not positive and finite"
            ),
            Violation::ReactantCapExceeded { reaction, total } => write!(
                f,
                "reaction {reaction}: total reactant stoichiometry {total} exceeds {MAX_REACTANT_STOICHIOMETRY}"
            ),
            Violation::DuplicateReaction { first, second } => {
                write!(f, "reaction {second} duplicates reaction {first}")
            }
            Violation::ReversePairDuplicate { first, second } => write!(
                f,
                "reactions {first} and {second} form a forward/backward pair; store one reversible reaction instead"
            ),
            Violation::BrokenRailPair { signal, message } => {
                write!(f, "rail pair {signal:?}: {message}")
            }
        }
    }
}

/// Parse failure with 1-based line and column of the offending token.
#[derive(Debug, Error, PartialEq)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Error, PartialEq)]
pub enum ParseErrorKind {
    #[error("expected '->' or '<->' between reactant and product sides")]
    MissingArrow,
    #[error("reaction side is empty")]
    EmptySide,
    #[error("{0}")]
    BadSpecies(String),
    #[error("missing 'kf=<rate>' after the reaction")]
    MissingForwardRate,
    #[error("reversible reaction needs a 'kr=<rate>' field")]
    MissingReverseRate,
    #[error("irreversible reaction cannot carry a 'kr=' field")]
    UnexpectedReverseRate,
    #[error("expected '{expected}=<rate>', found {found:?}")]
    BadRateField { expected: &'static str, found: String },
    #[error("cannot parse {text:?} as a rate")]
    BadRateValue { text: String },
    #[error("rate {value} must be positive and finite")]
    NonpositiveRate { value: f64 },
    #[error("unexpected trailing field {found:?}")]
    TrailingField { found: String },
    #[error("total reactant stoichiometry {total} exceeds {MAX_REACTANT_STOICHIOMETRY}")]
    ReactantCapExceeded { total: u32 },
}

fn err(line: usize, column: usize, kind: ParseErrorKind) -> ParseError {
    ParseError { line, column, kind }
}

/// Parses one (comment-stripped, non-blank) reaction line into `crn`.
fn parse_reaction_line(crn: &mut Crn, line: &str, lineno: usize) -> Result<(), ParseError> {
    // Fields are ';'-separated: equation, kf, then kr for reversibles.
    let mut fields = line.split(';');
    let equation = fields.next().expect("split yields at least one field");

    let (arrow_pos, arrow_len, reversible) = match equation.find("<->") {
        Some(p) => (p, 3, true),
        None => match equation.find("->") {
            Some(p) => (p, 2, false),
            None => return Err(err(lineno, 1, ParseErrorKind::MissingArrow)),
        },
    };
    let lhs = &equation[..arrow_pos];
    let rhs = &equation[arrow_pos + arrow_len..];
    let reactants = parse_side(crn, lhs, lineno, 0)?;
    let products = parse_side(crn, rhs, lineno, arrow_pos + arrow_len)?;

    let kf_field = fields
        .next()
        .ok_or_else(|| err(lineno, line.len() + 1, ParseErrorKind::MissingForwardRate))?;
    let kf_offset = field_offset(line, 1);
    let kf = parse_rate(kf_field, "kf", lineno, kf_offset)?;

    let kr = if reversible {
        let kr_field = fields
            .next()
            .ok_or_else(|| err(lineno, line.len() + 1, ParseErrorKind::MissingReverseRate))?;
        let kr_offset = field_offset(line, 2);
        Some(parse_rate(kr_field, "kr", lineno, kr_offset)?)
    } else {
        None
    };

    if let Some(extra) = fields.next() {
        let column = field_offset(line, if reversible { 3 } else { 2 }) + 1;
        return Err(err(
            lineno,
            column,
            ParseErrorKind::TrailingField {
                found: extra.trim().to_owned(),
            },
        ));
    }

    match crn.add_reaction(&reactants, &products, kf, kr) {
        Ok(_) => Ok(()),
        Err(CrnError::ReactantCapExceeded { total }) => {
            Err(err(lineno, 1, ParseErrorKind::ReactantCapExceeded { total }))
        }
        // Sides and rates were already screened above; nothing else can fail.
        Err(other) => unreachable!("parser pre-checked reaction: {other}"),
    }
}

/// Byte offset of the start of the n-th ';'-separated field.
fn field_offset(line: &str, n: usize) -> usize {
    let mut count = 0;
    for (i, c) in line.char_indices() {
        if c == ';' {
            count += 1;
            if count == n {
                return i + 1;
            }
        }
    }
    line.len()
}

/// Parses one side of an equation into (species, coeff) pairs,
/// declaring species on first use. `offset` is the side's byte position
/// within the line, for error columns.
fn parse_side(
    crn: &mut Crn,
    side: &str,
    lineno: usize,
    offset: usize,
) -> Result<Vec<(SpeciesId, u32)>, ParseError> {
    if side.trim().is_empty() {
        return Err(err(lineno, offset + 1, ParseErrorKind::EmptySide));
    }
    let mut terms = Vec::new();
    let mut cursor = 0;
    for token in side.split('+') {
        let trimmed = token.trim();
        let token_start = offset + cursor + (token.len() - token.trim_start().len());
        cursor += token.len() + 1; // +1 for the consumed '+'
        if trimmed.is_empty() {
            return Err(err(lineno, token_start + 1, ParseErrorKind::EmptySide));
        }
        let id = crn.ensure_species(trimmed).map_err(|e| {
            err(
                lineno,
                token_start + 1,
                ParseErrorKind::BadSpecies(e.to_string()),
            )
        })?;
        terms.push((id, 1));
    }
    Ok(terms)
}

fn parse_rate(
    field: &str,
    expected: &'static str,
    lineno: usize,
    offset: usize,
) -> Result<f64, ParseError> {
    let trimmed = field.trim();
    let column = offset + (field.len() - field.trim_start().len()) + 1;
    let Some(value_text) = trimmed.strip_prefix(expected).and_then(|r| r.strip_prefix('=')) else {
        // A 'kr=' where 'kf=' belongs is the one common mix-up worth
        // singling out.
        if expected == "kf" && trimmed.starts_with("kr=") {
            return Err(err(lineno, column, ParseErrorKind::UnexpectedReverseRate));
        }
        return Err(err(
            lineno,
            column,
            ParseErrorKind::BadRateField {
                expected,
                found: trimmed.to_owned(),
            },
        ));
    };
    let value: f64 = value_text.trim().parse().map_err(|_| {
        err(
            lineno,
            column,
            ParseErrorKind::BadRateValue {
                text: value_text.trim().to_owned(),
            },
        )
    })?;
    if !(value.is_finite() && value > 0.0) {
        return Err(err(lineno, column, ParseErrorKind::NonpositiveRate { value }));
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binding_line_crn() -> Crn {
        Crn::from_text("A0 + B0 <-> R1 ; kf=16.2 ; kr=100000\n").unwrap()
    }

    #[test]
    fn parses_reversible_binding_line() {
        let crn = binding_line_crn();
        assert_eq!(crn.species_count(), 3);
        assert_eq!(crn.reaction_count(), 1);
        let r = &crn.reactions()[0];
        assert_eq!(r.kf, 16.2);
        assert_eq!(r.kr, Some(1e5));
        assert_eq!(r.reactants.len(), 2);
        assert_eq!(r.products.len(), 1);
        assert_eq!(crn.species_name(r.products[0].species), Some("R1"));
    }

    #[test]
    fn serializes_back_to_identical_structure() {
        let crn = binding_line_crn();
        let text = crn.to_text();
        assert_eq!(text, "A0 + B0 <-> R1 ; kf=16.2 ; kr=100000\n");
        let reparsed = Crn::from_text(&text).unwrap();
        assert!(crn.same_structure(&reparsed));
    }

    #[test]
    fn coefficients_round_trip_by_repetition() {
        let mut crn = Crn::new();
        let clk0 = crn.add_species("CLK0").unwrap();
        let r1 = crn.add_species("R1@s1t").unwrap();
        crn.add_reaction(&[(clk0, 2)], &[(r1, 1)], 15.5, Some(1e5))
            .unwrap();
        let text = crn.to_text();
        assert_eq!(text, "CLK0 + CLK0 <-> R1@s1t ; kf=15.5 ; kr=100000\n");
        let reparsed = Crn::from_text(&text).unwrap();
        assert!(crn.same_structure(&reparsed));
        assert_eq!(reparsed.reactions()[0].reactants[0].coeff, 2);
    }

    #[test]
    fn duplicate_reaction_entries_are_rejected() {
        let mut crn = Crn::new();
        let a = crn.add_species("A").unwrap();
        let b = crn.add_species("B").unwrap();
        crn.add_reaction(&[(a, 1)], &[(b, 1)], 1.0, None).unwrap();
        assert_eq!(
            crn.add_reaction(&[(a, 1)], &[(b, 1)], 2.0, None),
            Err(CrnError::DuplicateReaction {
                existing: 0,
                swapped: false,
            }),
            "verbatim duplicate must be rejected even with a different rate"
        );
        assert_eq!(
            crn.add_reaction(&[(b, 1)], &[(a, 1)], 3.0, None),
            Err(CrnError::DuplicateReaction {
                existing: 0,
                swapped: true,
            }),
            "the backward direction belongs on the original as kr"
        );
        // An unrelated reaction with the same species is still fine.
        crn.add_reaction(&[(a, 1), (b, 1)], &[(a, 2)], 4.0, None)
            .unwrap();
        assert!(crn.validate().is_ok());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# header comment\n\nZ'0 + Z1 -> Z0 ; kf=16 # inline note\n\n";
        let crn = Crn::from_text(text).unwrap();
        assert_eq!(crn.reaction_count(), 1);
        assert_eq!(crn.species_count(), 3);
        assert!(crn.species_id("Z'0").is_some());
    }

    #[test]
    fn shortest_float_form_survives_round_trip() {
        let mut crn = Crn::new();
        let a = crn.add_species("A").unwrap();
        let b = crn.add_species("B").unwrap();
        // A value with no short decimal form: every bit must survive.
        let kf = 16.387_400_000_000_001_f64;
        crn.add_reaction(&[(a, 1)], &[(b, 1)], kf, None).unwrap();
        let reparsed = Crn::from_text(&crn.to_text()).unwrap();
        assert_eq!(reparsed.reactions()[0].kf.to_bits(), kf.to_bits());
    }

    #[test]
    fn missing_arrow_is_rejected_with_position() {
        let e = Crn::from_text("A0 + B0 ; kf=1\n").unwrap_err();
        assert_eq!(e.line, 1);
        assert_eq!(e.kind, ParseErrorKind::MissingArrow);
    }

    #[test]
    fn missing_rate_is_rejected() {
        let e = Crn::from_text("A -> B\n").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::MissingForwardRate);
    }

    #[test]
    fn reversible_without_reverse_rate_is_rejected() {
        let e = Crn::from_text("A <-> B ; kf=2\n").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::MissingReverseRate);
    }

    #[test]
    fn negative_rate_is_rejected() {
        let e = Crn::from_text("A -> B ; kf=-3\n").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::NonpositiveRate { value: -3.0 });
    }

    #[test]
    fn trailing_field_is_rejected() {
        let e = Crn::from_text("A -> B ; kf=1 ; kr=2\n").unwrap_err();
        // Irreversible reactions must not carry kr.
        assert!(matches!(
            e.kind,
            ParseErrorKind::TrailingField { .. } | ParseErrorKind::UnexpectedReverseRate
        ));
    }

    #[test]
    fn empty_product_side_is_rejected() {
        let e = Crn::from_text("A -> ; kf=1\n").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::EmptySide);
        assert_eq!(e.line, 1);
    }

    #[test]
    fn three_reactants_are_rejected_everywhere() {
        let e = Crn::from_text("A + B + C -> D ; kf=1\n").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::ReactantCapExceeded { total: 3 });

        let mut crn = Crn::new();
        let a = crn.add_species("A").unwrap();
        let d = crn.add_species("D").unwrap();
        let e = crn.add_reaction(&[(a, 2), (a, 1)], &[(d, 1)], 1.0, None);
        assert_eq!(e, Err(CrnError::ReactantCapExceeded { total: 3 }));
    }

    #[test]
    fn rail_names_compose_around_instance_suffix() {
        assert_eq!(rail_name("Z", 0), "Z0");
        assert_eq!(rail_name("Z'", 1), "Z'1");
        assert_eq!(rail_name("A@s3t", 1), "A1@s3t");
        assert_eq!(rail_name("S@s12", 0), "S0@s12");
    }

    #[test]
    fn declared_rail_pairs_validate_and_break_detectably() {
        let mut crn = Crn::new();
        let (lo, hi) = crn.declare_rail_pair("Z@s1t").unwrap();
        assert_eq!(crn.species_name(lo), Some("Z0@s1t"));
        assert_eq!(crn.species_name(hi), Some("Z1@s1t"));
        assert!(crn.validate().is_ok());

        // Re-point rail 1 at a wrong species via the raw constructor.
        let mut pairs = BTreeMap::new();
        pairs.insert("Z@s1t".to_owned(), (lo, SpeciesId(99)));
        let broken = Crn::from_parts(
            crn.species_names().map(str::to_owned).collect(),
            crn.reactions().to_vec(),
            pairs,
        );
        let report = broken.validate();
        assert!(!report.is_ok());
        assert!(matches!(
            report.violations[0],
            Violation::BrokenRailPair { .. }
        ));
    }

    #[test]
    fn validate_flags_reverse_pair_stored_as_two_entries() {
        // The checked constructor refuses such pairs, so assemble the
        // ill-formed network raw.
        let term = |id: usize| Term {
            species: SpeciesId(id),
            coeff: 1,
        };
        let crn = Crn::from_parts(
            vec!["A".into(), "B".into()],
            vec![
                Reaction {
                    reactants: vec![term(0)],
                    products: vec![term(1)],
                    kf: 2.0,
                    kr: None,
                },
                Reaction {
                    reactants: vec![term(1)],
                    products: vec![term(0)],
                    kf: 3.0,
                    kr: None,
                },
            ],
            BTreeMap::new(),
        );
        let report = crn.validate();
        assert_eq!(
            report.violations,
            vec![Violation::ReversePairDuplicate { first: 0, second: 1 }]
        );
    }

    #[test]
    fn validate_flags_unknown_species_from_raw_parts() {
        let crn = Crn::from_parts(
            vec!["A".into()],
            vec![Reaction {
                reactants: vec![Term {
                    species: SpeciesId(0),
                    coeff: 1,
                }],
                products: vec![Term {
                    species: SpeciesId(7),
                    coeff: 1,
                }],
                kf: 1.0,
                kr: None,
            }],
            BTreeMap::new(),
        );
        let report = crn.validate();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::UnknownSpecies { reaction: 0, species: 7 })));
    }

    #[test]
    fn repeated_terms_accumulate() {
        let mut crn = Crn::new();
        let a = crn.add_species("A").unwrap();
        let b = crn.add_species("B").unwrap();
        crn.add_reaction(&[(a, 1), (a, 1)], &[(b, 1)], 1.0, None)
            .unwrap();
        assert_eq!(crn.reactions()[0].reactants, vec![Term { species: a, coeff: 2 }]);
    }
}
