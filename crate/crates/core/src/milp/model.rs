//! A small mixed-integer linear program IR shared by the encoder, the
//! enumeration oracle, and the solver backends.

use std::fmt::Write as _;

/// Handle into a model's variable table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(pub(crate) usize);

impl VarId {
    /// Position in the model's variable table.
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone)]
pub struct VarDef {
    pub name: String,
    pub kind: VarKind,
    pub lo: f64,
    pub hi: f64,
    /// Objective coefficient (the model always maximizes).
    pub obj: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelOp {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub op: RelOp,
    pub rhs: f64,
}

/// A maximize-sense MILP over bounded continuous and binary variables.
#[derive(Debug, Clone, Default)]
pub struct MilpModel {
    vars: Vec<VarDef>,
    constraints: Vec<Constraint>,
    big_m: f64,
}

impl MilpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lo: f64, hi: f64) -> VarId {
        self.vars.push(VarDef {
            name: name.into(),
            kind: VarKind::Continuous,
            lo,
            hi,
            obj: 0.0,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.vars.push(VarDef {
            name: name.into(),
            kind: VarKind::Binary,
            lo: 0.0,
            hi: 1.0,
            obj: 0.0,
        });
        VarId(self.vars.len() - 1)
    }

    /// Mark `var` as the (sole) objective term, weight 1.
    pub fn maximize(&mut self, var: VarId) {
        for v in &mut self.vars {
            v.obj = 0.0;
        }
        self.vars[var.0].obj = 1.0;
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarId, f64)>,
        op: RelOp,
        rhs: f64,
    ) {
        debug_assert!(terms.iter().all(|(v, _)| v.0 < self.vars.len()));
        self.constraints.push(Constraint {
            name: name.into(),
            terms,
            op,
            rhs,
        });
    }

    pub fn set_big_m(&mut self, m: f64) {
        self.big_m = m;
    }

    /// The big-M constant used for the hyper-confidence disjunction.
    pub fn big_m(&self) -> f64 {
        self.big_m
    }

    pub fn vars(&self) -> &[VarDef] {
        &self.vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn binary_count(&self) -> usize {
        self.vars
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .count()
    }

    /// Serialize in CPLEX LP text format, for debugging with external tools.
    pub fn to_lp_format(&self) -> String {
        let mut out = String::from("Maximize\n obj:");
        let mut any = false;
        for v in &self.vars {
            if v.obj != 0.0 {
                let _ = write!(out, " {} {}", fmt_coef(v.obj), v.name);
                any = true;
            }
        }
        if !any {
            out.push_str(" 0");
        }
        out.push_str("\nSubject To\n");
        for c in &self.constraints {
            let _ = write!(out, " {}:", c.name);
            for (var, coef) in &c.terms {
                let _ = write!(out, " {} {}", fmt_coef(*coef), self.vars[var.0].name);
            }
            let op = match c.op {
                RelOp::Le => "<=",
                RelOp::Ge => ">=",
                RelOp::Eq => "=",
            };
            let _ = writeln!(out, " {op} {}", c.rhs);
        }
        out.push_str("Bounds\n");
        for v in &self.vars {
            if v.kind == VarKind::Continuous {
                let _ = writeln!(out, " {} <= {} <= {}", v.lo, v.name, v.hi);
            }
        }
        let binaries: Vec<&str> = self
            .vars
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .map(|v| v.name.as_str())
            .collect();
        if !binaries.is_empty() {
            out.push_str("Binaries\n ");
            out.push_str(&binaries.join(" "));
            out.push('\n');
        }
        out.push_str("End\n");
        out
    }
}

fn fmt_coef(c: f64) -> String {
    if c >= 0.0 {
        format!("+{c}")
    } else {
        format!("{c}")
    }
}
