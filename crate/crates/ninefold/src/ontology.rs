//! The role-aspect ontology: seven user roles, nine evaluation aspects, and
//! the binary relevance mask selecting the 28 (role, aspect) pairs that are
//! actually scored.
//!
//! Aspects are fixed. Roles are supplied by the ontology (three canonical
//! tokens ship by default, the remaining four are placeholders a deployment
//! is expected to replace). Construction validates all cardinality
//! invariants, so a mask with anything other than 28 set entries can never
//! circulate.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

pub const ROLE_COUNT: usize = 7;
pub const ASPECT_COUNT: usize = 9;
pub const MASK_CARDINALITY: usize = 28;

/// One of the nine evaluation aspects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Aspect {
    /// Text rendering fidelity.
    #[serde(rename = "TR")]
    Tr,
    /// Lighting integrity (inferred vs. prompted light direction).
    #[serde(rename = "LI")]
    Li,
    /// Compositional scene evaluation (regional coverage + subject consistency).
    #[serde(rename = "CSE")]
    Cse,
    /// Character portrayal accuracy (count, posture, expression).
    #[serde(rename = "CPA")]
    Cpa,
    /// Physical-spatial consistency (penetration detection).
    #[serde(rename = "PSC")]
    Psc,
    /// Geometric coherence (min-pooled image-space cues).
    #[serde(rename = "GC")]
    Gc,
    /// Style fusion (questionnaire-scored).
    #[serde(rename = "SF")]
    Sf,
    /// Cultural-historical fidelity (questionnaire-scored).
    #[serde(rename = "CUL")]
    Cul,
    /// Material accuracy (questionnaire-scored).
    #[serde(rename = "MA")]
    Ma,
}

impl Aspect {
    pub const ALL: [Aspect; ASPECT_COUNT] = [
        Aspect::Tr,
        Aspect::Li,
        Aspect::Cse,
        Aspect::Cpa,
        Aspect::Psc,
        Aspect::Gc,
        Aspect::Sf,
        Aspect::Cul,
        Aspect::Ma,
    ];

    pub fn token(&self) -> &'static str {
        match self {
            Aspect::Tr => "TR",
            Aspect::Li => "LI",
            Aspect::Cse => "CSE",
            Aspect::Cpa => "CPA",
            Aspect::Psc => "PSC",
            Aspect::Gc => "GC",
            Aspect::Sf => "SF",
            Aspect::Cul => "CUL",
            Aspect::Ma => "MA",
        }
    }

    pub fn from_token(token: &str) -> Option<Aspect> {
        Aspect::ALL.iter().copied().find(|a| a.token() == token)
    }

    pub fn index(&self) -> usize {
        Aspect::ALL.iter().position(|a| a == self).unwrap()
    }

    /// Whether the aspect is scored by a deterministic metric (as opposed to
    /// the questionnaire engine).
    pub fn is_deterministic(&self) -> bool {
        !matches!(self, Aspect::Sf | Aspect::Cul | Aspect::Ma)
    }
}

impl fmt::Display for Aspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Token identifying a role within an ontology (e.g. `GD`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoleId(String);

impl RoleId {
    pub fn new(token: impl Into<String>) -> Self {
        Self(token.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RoleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RoleId {
    fn from(s: &str) -> Self {
        RoleId::new(s)
    }
}

/// A registered user role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Role {
    pub token: RoleId,
    pub name: String,
    /// Placeholder roles shipped in the default ontology are non-canonical;
    /// deployments substitute their own.
    #[serde(default = "default_true")]
    pub canonical: bool,
}

fn default_true() -> bool {
    true
}

impl Role {
    pub fn new(token: &str, name: &str, canonical: bool) -> Self {
        Self {
            token: RoleId::new(token),
            name: name.to_string(),
            canonical,
        }
    }
}

/// Binary role × aspect relevance matrix with exactly 28 set entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceMask {
    entries: Vec<[bool; ASPECT_COUNT]>,
}

impl RelevanceMask {
    fn from_rows(entries: Vec<[bool; ASPECT_COUNT]>) -> Self {
        Self { entries }
    }

    pub fn is_set(&self, role_idx: usize, aspect: Aspect) -> bool {
        self.entries
            .get(role_idx)
            .is_some_and(|row| row[aspect.index()])
    }

    pub fn cardinality(&self) -> usize {
        self.entries
            .iter()
            .map(|row| row.iter().filter(|&&b| b).count())
            .sum()
    }

    pub fn aspects_for(&self, role_idx: usize) -> impl Iterator<Item = Aspect> + '_ {
        Aspect::ALL
            .into_iter()
            .filter(move |a| self.is_set(role_idx, *a))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OntologyError {
    WrongRoleCount(usize),
    DuplicateRole(String),
    UnknownMaskRole(String),
    UnknownMaskAspect(String),
    DuplicateMaskPair(String, String),
    WrongMaskCardinality(usize),
}

impl fmt::Display for OntologyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OntologyError::WrongRoleCount(n) => {
                write!(f, "expected exactly {ROLE_COUNT} roles, got {n}")
            }
            OntologyError::DuplicateRole(t) => write!(f, "duplicate role token `{t}`"),
            OntologyError::UnknownMaskRole(t) => write!(f, "mask names unknown role `{t}`"),
            OntologyError::UnknownMaskAspect(t) => write!(f, "mask names unknown aspect `{t}`"),
            OntologyError::DuplicateMaskPair(r, a) => {
                write!(f, "mask pair ({r}, {a}) listed twice")
            }
            OntologyError::WrongMaskCardinality(n) => {
                write!(f, "mask must set exactly {MASK_CARDINALITY} pairs, got {n}")
            }
        }
    }
}

impl core::error::Error for OntologyError {}

/// Validated role set plus relevance mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ontology {
    roles: Vec<Role>,
    mask: RelevanceMask,
}

impl Ontology {
    /// Build from a role list and mask pairs, validating every cardinality
    /// invariant. Fails fast on any violation.
    pub fn from_parts(
        roles: Vec<Role>,
        mask_pairs: &[(RoleId, Aspect)],
    ) -> Result<Self, OntologyError> {
        if roles.len() != ROLE_COUNT {
            return Err(OntologyError::WrongRoleCount(roles.len()));
        }
        for (i, role) in roles.iter().enumerate() {
            if roles[..i].iter().any(|r| r.token == role.token) {
                return Err(OntologyError::DuplicateRole(role.token.as_str().to_string()));
            }
        }
        let mut rows = alloc::vec![[false; ASPECT_COUNT]; ROLE_COUNT];
        for (role, aspect) in mask_pairs {
            let idx = roles
                .iter()
                .position(|r| &r.token == role)
                .ok_or_else(|| OntologyError::UnknownMaskRole(role.as_str().to_string()))?;
            if rows[idx][aspect.index()] {
                return Err(OntologyError::DuplicateMaskPair(
                    role.as_str().to_string(),
                    aspect.token().to_string(),
                ));
            }
            rows[idx][aspect.index()] = true;
        }
        let mask = RelevanceMask::from_rows(rows);
        let card = mask.cardinality();
        if card != MASK_CARDINALITY {
            return Err(OntologyError::WrongMaskCardinality(card));
        }
        Ok(Self { roles, mask })
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn mask(&self) -> &RelevanceMask {
        &self.mask
    }

    pub fn role_index(&self, token: &str) -> Option<usize> {
        self.roles.iter().position(|r| r.token.as_str() == token)
    }

    pub fn role(&self, token: &str) -> Option<&Role> {
        self.roles.iter().find(|r| r.token.as_str() == token)
    }

    /// Whether `(role, aspect)` is one of the 28 scored pairs.
    pub fn is_relevant(&self, role: &RoleId, aspect: Aspect) -> bool {
        self.role_index(role.as_str())
            .is_some_and(|i| self.mask.is_set(i, aspect))
    }

    pub fn relevant_aspects(&self, role: &RoleId) -> Vec<Aspect> {
        self.role_index(role.as_str())
            .map(|i| self.mask.aspects_for(i).collect())
            .unwrap_or_default()
    }

    /// All 28 scored pairs in (role declaration, aspect declaration) order.
    pub fn relevant_pairs(&self) -> Vec<(RoleId, Aspect)> {
        let mut out = Vec::with_capacity(MASK_CARDINALITY);
        for (i, role) in self.roles.iter().enumerate() {
            for aspect in self.mask.aspects_for(i) {
                out.push((role.token.clone(), aspect));
            }
        }
        out
    }
}

/// The ontology shipped by default: three canonical roles, four placeholder
/// roles (R4-R7), and a uniform mask granting each role four aspects.
/// Placeholder rows are a working default, not a claim about any survey.
pub fn default_ontology() -> Ontology {
    use Aspect::*;
    let roles = alloc::vec![
        Role::new("GD", "Graphic Designer", true),
        Role::new("SA", "Storyboard Artist", true),
        Role::new("MS", "Marketing Specialist", true),
        Role::new("R4", "Placeholder Role 4", false),
        Role::new("R5", "Placeholder Role 5", false),
        Role::new("R6", "Placeholder Role 6", false),
        Role::new("R7", "Placeholder Role 7", false),
    ];
    let pairs: &[(&str, Aspect)] = &[
        ("GD", Tr),
        ("GD", Cse),
        ("GD", Sf),
        ("GD", Gc),
        ("SA", Cse),
        ("SA", Cpa),
        ("SA", Psc),
        ("SA", Sf),
        ("MS", Tr),
        ("MS", Cpa),
        ("MS", Cul),
        ("MS", Ma),
        ("R4", Li),
        ("R4", Psc),
        ("R4", Gc),
        ("R4", Ma),
        ("R5", Li),
        ("R5", Cse),
        ("R5", Sf),
        ("R5", Cul),
        ("R6", Li),
        ("R6", Cpa),
        ("R6", Psc),
        ("R6", Gc),
        ("R7", Tr),
        ("R7", Gc),
        ("R7", Cul),
        ("R7", Ma),
    ];
    let pairs: Vec<(RoleId, Aspect)> = pairs
        .iter()
        .map(|(r, a)| (RoleId::new(*r), *a))
        .collect();
    Ontology::from_parts(roles, &pairs).expect("default ontology satisfies its own invariants")
}
