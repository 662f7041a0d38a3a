use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::sexpr::{self, SExpr};
use super::{
    ActionSchema, Domain, GroundAtom, Literal, PddlError, PredicateDef, Problem, TypeSpec,
    TypedParam, OBJECT,
};

const SUPPORTED_REQUIREMENTS: [&str; 3] = [":strips", ":typing", ":negative-preconditions"];

const UNSUPPORTED_FORMULA_HEADS: [&str; 10] = [
    "or", "imply", "exists", "forall", "when", "=", "increase", "decrease", "assign", "either",
];

fn unsupported(construct: &str, e: &SExpr) -> PddlError {
    let p = e.pos();
    PddlError::Unsupported {
        construct: construct.to_string(),
        line: p.line,
        col: p.col,
    }
}

fn syntax(e: &SExpr, msg: impl Into<String>) -> PddlError {
    let p = e.pos();
    PddlError::Syntax {
        line: p.line,
        col: p.col,
        message: msg.into(),
    }
}

fn list<'a>(e: &'a SExpr, what: &str) -> Result<&'a [SExpr], PddlError> {
    e.as_list()
        .ok_or_else(|| syntax(e, format!("expected list for {what}")))
}

fn atom<'a>(e: &'a SExpr, what: &str) -> Result<&'a str, PddlError> {
    e.as_atom()
        .ok_or_else(|| syntax(e, format!("expected identifier for {what}")))
}

/// Splits `(define (KIND name) sections...)` into name and sections.
fn define<'a>(top: &'a SExpr, kind: &str) -> Result<(&'a str, &'a [SExpr]), PddlError> {
    let items = list(top, "define")?;
    if items.first().and_then(SExpr::as_atom) != Some("define") {
        return Err(syntax(top, "expected (define ...)"));
    }
    let header = items
        .get(1)
        .ok_or_else(|| syntax(top, format!("missing ({kind} name)")))?;
    let h = list(header, kind)?;
    if h.len() != 2 || h[0].as_atom() != Some(kind) {
        return Err(syntax(header, format!("expected ({kind} name)")));
    }
    Ok((atom(&h[1], "name")?, &items[2..]))
}

fn section_key(section: &SExpr) -> Result<&str, PddlError> {
    section
        .head()
        .filter(|h| h.starts_with(':'))
        .ok_or_else(|| syntax(section, "expected a (:keyword ...) section"))
}

fn type_ref(e: &SExpr) -> Result<TypeSpec, PddlError> {
    match e {
        SExpr::Atom(s, _) => Ok(TypeSpec::single(s.clone())),
        SExpr::List(items, _) => {
            if items.first().and_then(SExpr::as_atom) != Some("either") || items.len() < 2 {
                return Err(syntax(e, "expected type name or (either ...)"));
            }
            let names = items[1..]
                .iter()
                .map(|t| atom(t, "type").map(str::to_string))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(TypeSpec::either(names))
        }
    }
}

/// Parses `a b - t c - (either u v) d` into (name, type) pairs; trailing names get `object`.
fn typed_list(items: &[SExpr]) -> Result<Vec<(String, TypeSpec, &SExpr)>, PddlError> {
    let mut out = Vec::new();
    let mut pending: Vec<&SExpr> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let it = &items[i];
        if it.as_atom() == Some("-") {
            let ty_expr = items
                .get(i + 1)
                .ok_or_else(|| syntax(it, "missing type after '-'"))?;
            if pending.is_empty() {
                return Err(syntax(it, "'-' with no preceding names"));
            }
            let ty = type_ref(ty_expr)?;
            for p in pending.drain(..) {
                out.push((atom(p, "name")?.to_string(), ty.clone(), p));
            }
            i += 2;
        } else {
            atom(it, "name")?;
            pending.push(it);
            i += 1;
        }
    }
    for p in pending {
        out.push((atom(p, "name")?.to_string(), TypeSpec::object(), p));
    }
    Ok(out)
}

fn requirements(section: &[SExpr], into: &mut BTreeSet<String>) -> Result<(), PddlError> {
    for r in &section[1..] {
        let name = atom(r, "requirement")?;
        if !SUPPORTED_REQUIREMENTS.contains(&name) {
            return Err(unsupported(name, r));
        }
        into.insert(name.to_string());
    }
    Ok(())
}

pub fn parse_domain(text: &str) -> Result<Domain, PddlError> {
    let top = sexpr::read(text)?;
    let (name, sections) = define(&top, "domain")?;
    let mut domain = Domain {
        name: name.to_string(),
        requirements: BTreeSet::new(),
        types: BTreeMap::new(),
        predicates: Vec::new(),
        actions: Vec::new(),
    };
    let mut action_exprs = Vec::new();
    let mut type_refs: Vec<(String, &SExpr)> = Vec::new();

    for section in sections {
        let key = section_key(section)?;
        let items = section.as_list().unwrap();
        match key {
            ":requirements" => requirements(items, &mut domain.requirements)?,
            ":types" => {
                for (t, parent, at) in typed_list(&items[1..])? {
                    if parent.names().len() != 1 {
                        return Err(unsupported("either", at));
                    }
                    let parent = parent.names()[0].clone();
                    if t == OBJECT {
                        continue;
                    }
                    let parent = (parent != OBJECT).then_some(parent);
                    if domain.types.insert(t.clone(), parent).is_some() {
                        return Err(syntax(at, format!("type `{t}` declared twice")));
                    }
                }
            }
            ":predicates" => {
                declare_implicit_parents(&mut domain.types);
                for p in &items[1..] {
                    let pl = list(p, "predicate")?;
                    let pname = atom(
                        pl.first().ok_or_else(|| syntax(p, "empty predicate"))?,
                        "predicate name",
                    )?;
                    let params = typed_list(&pl[1..])?;
                    for (_, ty, at) in &params {
                        for n in ty.names() {
                            type_refs.push((n.clone(), at));
                        }
                    }
                    if domain.predicate(pname).is_some() {
                        return Err(syntax(p, format!("predicate `{pname}` declared twice")));
                    }
                    domain.predicates.push(PredicateDef {
                        name: pname.to_string(),
                        param_types: params.into_iter().map(|(_, t, _)| t).collect(),
                    });
                }
            }
            ":action" => action_exprs.push(section),
            other => return Err(unsupported(other, section)),
        }
    }

    declare_implicit_parents(&mut domain.types);
    for (t, at) in &type_refs {
        if !domain.has_type(t) {
            return Err(syntax(at, format!("undeclared type `{t}`")));
        }
    }

    for a in action_exprs {
        let schema = action(&domain, a)?;
        if domain.action(&schema.name).is_some() {
            return Err(syntax(a, format!("action `{}` declared twice", schema.name)));
        }
        domain.actions.push(schema);
    }
    Ok(domain)
}

/// Parents named only on the right of `-` are declared as children of `object`.
fn declare_implicit_parents(types: &mut BTreeMap<String, Option<String>>) {
    let missing: Vec<String> = types
        .values()
        .flatten()
        .filter(|p| !types.contains_key(*p))
        .cloned()
        .collect();
    for m in missing {
        types.insert(m, None);
    }
}

fn action(domain: &Domain, e: &SExpr) -> Result<ActionSchema, PddlError> {
    let items = e.as_list().unwrap();
    let name = atom(
        items.get(1).ok_or_else(|| syntax(e, "missing action name"))?,
        "action name",
    )?;
    let mut params = Vec::new();
    let mut pre = BTreeSet::new();
    let mut eff = BTreeSet::new();
    let mut i = 2;
    while i < items.len() {
        let key_expr = &items[i];
        let key = atom(key_expr, "action keyword")?;
        let value = items
            .get(i + 1)
            .ok_or_else(|| syntax(key_expr, format!("missing value for {key}")))?;
        match key {
            ":parameters" => {
                for (n, ty, at) in typed_list(list(value, "parameters")?)? {
                    if !n.starts_with('?') {
                        return Err(syntax(at, format!("parameter `{n}` must start with '?'")));
                    }
                    for t in ty.names() {
                        if !domain.has_type(t) {
                            return Err(syntax(at, format!("undeclared type `{t}`")));
                        }
                    }
                    if params.iter().any(|p: &TypedParam| p.name == n) {
                        return Err(syntax(at, format!("duplicate parameter `{n}`")));
                    }
                    params.push(TypedParam::new(n, ty));
                }
            }
            ":precondition" => formula(value, &mut pre)?,
            ":effect" => formula(value, &mut eff)?,
            other => return Err(unsupported(other, key_expr)),
        }
        i += 2;
    }
    let schema = ActionSchema {
        name: name.to_string(),
        params,
        pre,
        eff,
    };
    check_schema(domain, &schema)?;
    Ok(schema)
}

/// Collects a conjunction of literals into `out`.
fn formula(e: &SExpr, out: &mut BTreeSet<Literal>) -> Result<(), PddlError> {
    let items = list(e, "formula")?;
    let Some(head) = items.first() else {
        // `()` is the empty conjunction.
        return Ok(());
    };
    let h = atom(head, "formula head")?;
    match h {
        "and" => {
            for sub in &items[1..] {
                formula(sub, out)?;
            }
            Ok(())
        }
        "not" => {
            if items.len() != 2 {
                return Err(syntax(e, "`not` takes exactly one atom"));
            }
            let inner = &items[1];
            if let Some(ih) = inner.head() {
                if ih == "not" || ih == "and" || UNSUPPORTED_FORMULA_HEADS.contains(&ih) {
                    return Err(unsupported(ih, inner));
                }
            }
            let mut lit = literal_atom(inner)?;
            lit.positive = false;
            out.insert(lit);
            Ok(())
        }
        h if UNSUPPORTED_FORMULA_HEADS.contains(&h) => Err(unsupported(h, e)),
        _ => {
            out.insert(literal_atom(e)?);
            Ok(())
        }
    }
}

fn literal_atom(e: &SExpr) -> Result<Literal, PddlError> {
    let items = list(e, "atom")?;
    let pred = atom(
        items.first().ok_or_else(|| syntax(e, "empty atom"))?,
        "predicate",
    )?;
    let args = items[1..]
        .iter()
        .map(|a| atom(a, "argument").map(str::to_string))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Literal {
        predicate: pred.to_string(),
        args,
        positive: true,
    })
}

/// Arity, typing, SSA and self-contradiction checks for one schema.
pub(crate) fn check_schema(domain: &Domain, a: &ActionSchema) -> Result<(), PddlError> {
    for (part, lits) in [("precondition", &a.pre), ("effect", &a.eff)] {
        for lit in lits.iter() {
            let pred = domain.predicate(&lit.predicate).ok_or_else(|| {
                PddlError::invalid(format!(
                    "action `{}`: unknown predicate `{}`",
                    a.name, lit.predicate
                ))
            })?;
            if pred.arity() != lit.args.len() {
                return Err(PddlError::invalid(format!(
                    "action `{}`: `{}` expects {} arguments, got {}",
                    a.name,
                    pred.name,
                    pred.arity(),
                    lit.args.len()
                )));
            }
            for (arg, slot) in lit.args.iter().zip(&pred.param_types) {
                let param = a.params.iter().find(|p| &p.name == arg).ok_or_else(|| {
                    PddlError::invalid(format!(
                        "action `{}`: {part} mentions `{arg}` which is not a parameter",
                        a.name
                    ))
                })?;
                if !domain.overlaps(&param.ty, slot) {
                    return Err(PddlError::invalid(format!(
                        "action `{}`: `{arg}` of type {} cannot fill {} slot of `{}`",
                        a.name, param.ty, slot, pred.name
                    )));
                }
            }
            if lits.contains(&lit.negated()) {
                return Err(PddlError::invalid(format!(
                    "action `{}`: {part} contains both {} and its negation",
                    a.name,
                    lit.atom()
                )));
            }
        }
    }
    Ok(())
}

pub fn parse_problem(text: &str, domain: &Domain) -> Result<Problem, PddlError> {
    let top = sexpr::read(text)?;
    let (name, sections) = define(&top, "problem")?;
    let mut problem = Problem {
        name: name.to_string(),
        domain: String::new(),
        objects: Vec::new(),
        init: BTreeSet::new(),
    };
    let mut init_expr = None;
    for section in sections {
        let key = section_key(section)?;
        let items = section.as_list().unwrap();
        match key {
            ":domain" => {
                let d = atom(
                    items.get(1).ok_or_else(|| syntax(section, "missing domain name"))?,
                    "domain name",
                )?;
                if d != domain.name {
                    return Err(PddlError::invalid(format!(
                        "problem `{name}` is for domain `{d}`, not `{}`",
                        domain.name
                    )));
                }
                problem.domain = d.to_string();
            }
            ":requirements" => requirements(items, &mut BTreeSet::new())?,
            ":objects" => {
                let mut seen = HashSet::new();
                for (o, ty, at) in typed_list(&items[1..])? {
                    if ty.names().len() != 1 {
                        return Err(unsupported("either", at));
                    }
                    let t = ty.names()[0].clone();
                    if !domain.has_type(&t) {
                        return Err(syntax(at, format!("unknown type `{t}` for object `{o}`")));
                    }
                    if !seen.insert(o.clone()) {
                        return Err(syntax(at, format!("object `{o}` declared twice")));
                    }
                    problem.objects.push((o, t));
                }
            }
            ":init" => init_expr = Some(section),
            ":goal" => {}
            other => return Err(unsupported(other, section)),
        }
    }
    if problem.domain.is_empty() {
        return Err(syntax(&top, "missing (:domain name)"));
    }
    if let Some(section) = init_expr {
        for fact in &section.as_list().unwrap()[1..] {
            if let Some(h) = fact.head() {
                if h == "not" || h == "=" || UNSUPPORTED_FORMULA_HEADS.contains(&h) {
                    return Err(unsupported(h, fact));
                }
            }
            let lit = literal_atom(fact)?;
            let atom = GroundAtom {
                predicate: lit.predicate,
                args: lit.args,
            };
            check_ground_atom(domain, &problem, &atom)?;
            problem.init.insert(atom);
        }
    }
    Ok(problem)
}

pub(crate) fn check_ground_atom(
    domain: &Domain,
    problem: &Problem,
    atom: &GroundAtom,
) -> Result<(), PddlError> {
    let pred = domain
        .predicate(&atom.predicate)
        .ok_or_else(|| PddlError::invalid(format!("unknown predicate in {atom}")))?;
    if pred.arity() != atom.args.len() {
        return Err(PddlError::invalid(format!(
            "arity mismatch in {atom}: `{}` expects {}",
            pred.name,
            pred.arity()
        )));
    }
    for (arg, slot) in atom.args.iter().zip(&pred.param_types) {
        let ty = problem
            .object_type(arg)
            .ok_or_else(|| PddlError::invalid(format!("undeclared object `{arg}` in {atom}")))?;
        if !domain.fits(ty, slot) {
            return Err(PddlError::invalid(format!(
                "object `{arg}` of type {ty} cannot fill {slot} slot in {atom}"
            )));
        }
    }
    Ok(())
}
