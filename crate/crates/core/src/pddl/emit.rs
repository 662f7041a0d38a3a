use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use super::{ActionSchema, Domain, Literal, TypeSpec};

/// Renders a domain as PDDL text.
///
/// Output is deterministic: types, predicates, actions and the literals inside
/// each conjunction are sorted. Learned literals are written verbatim; nothing
/// is merged or repaired.
pub fn emit_domain(domain: &Domain) -> String {
    let mut out = String::new();
    writeln!(out, "(define (domain {})", domain.name).unwrap();

    let mut reqs: BTreeSet<String> = domain.requirements.clone();
    reqs.insert(":strips".into());
    if needs_typing(domain) {
        reqs.insert(":typing".into());
    }
    if domain
        .actions
        .iter()
        .any(|a| a.pre.iter().any(|l| !l.positive))
    {
        reqs.insert(":negative-preconditions".into());
    }
    let reqs: Vec<_> = reqs.into_iter().collect();
    writeln!(out, "  (:requirements {})", reqs.join(" ")).unwrap();

    if !domain.types.is_empty() {
        // Group children by parent so the hierarchy reads as `a b - parent`.
        let mut by_parent: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (t, parent) in &domain.types {
            by_parent
                .entry(parent.as_deref().unwrap_or(""))
                .or_default()
                .push(t);
        }
        out.push_str("  (:types");
        for (parent, children) in &by_parent {
            if parent.is_empty() {
                continue;
            }
            write!(out, "\n    {} - {}", children.join(" "), parent).unwrap();
        }
        if let Some(roots) = by_parent.get("") {
            write!(out, "\n    {}", roots.join(" ")).unwrap();
        }
        out.push_str(")\n");
    }

    let mut preds = domain.predicates.clone();
    preds.sort();
    out.push_str("  (:predicates");
    for p in &preds {
        write!(out, "\n    ({}", p.name).unwrap();
        for (i, ty) in p.param_types.iter().enumerate() {
            write!(out, " ?a{}", i + 1).unwrap();
            write_type(&mut out, ty);
        }
        out.push(')');
    }
    out.push_str(")\n");

    let mut actions: Vec<&ActionSchema> = domain.actions.iter().collect();
    actions.sort_by(|a, b| a.name.cmp(&b.name));
    for a in actions {
        out.push('\n');
        emit_action(&mut out, a);
    }
    out.push_str(")\n");
    out
}

fn needs_typing(domain: &Domain) -> bool {
    !domain.types.is_empty()
        || domain
            .predicates
            .iter()
            .flat_map(|p| &p.param_types)
            .any(|t| !t.is_object())
        || domain
            .actions
            .iter()
            .flat_map(|a| &a.params)
            .any(|p| !p.ty.is_object())
}

fn write_type(out: &mut String, ty: &TypeSpec) {
    if !ty.is_object() {
        write!(out, " - {ty}").unwrap();
    }
}

fn emit_action(out: &mut String, a: &ActionSchema) {
    writeln!(out, "  (:action {}", a.name).unwrap();
    out.push_str("    :parameters (");
    for (i, p) in a.params.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&p.name);
        write_type(out, &p.ty);
    }
    out.push_str(")\n");
    writeln!(out, "    :precondition {}", conjunction(&a.pre)).unwrap();
    writeln!(out, "    :effect {})", conjunction(&a.eff)).unwrap();
}

fn conjunction(lits: &BTreeSet<Literal>) -> String {
    let parts: Vec<String> = lits.iter().map(Literal::to_string).collect();
    if parts.is_empty() {
        "(and)".to_string()
    } else {
        format!("(and {})", parts.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::super::{parse_domain, TypedParam};
    use super::*;

    #[test]
    fn empty_effect_emits_valid_conjunction() {
        let mut d = parse_domain("(define (domain e) (:predicates (p ?x)))").unwrap();
        d.actions.push(ActionSchema {
            name: "noop".into(),
            params: vec![TypedParam::new("?x", TypeSpec::object())],
            pre: [Literal::new("p", &["?x"], true)].into_iter().collect(),
            eff: BTreeSet::new(),
        });
        let text = emit_domain(&d);
        assert!(text.contains(":effect (and))"), "{text}");
        let back = parse_domain(&text).unwrap();
        assert!(back.semantically_eq(&d));
        assert!(back.actions[0].eff.is_empty());
    }

    #[test]
    fn negative_preconditions_add_requirement() {
        let src = "(define (domain n) (:predicates (p ?x) (q ?x))
            (:action a :parameters (?x) :precondition (and (not (p ?x)) (q ?x)) :effect (p ?x)))";
        let d = parse_domain(src).unwrap();
        let text = emit_domain(&d);
        assert!(text.contains(":negative-preconditions"));
        assert!(text.contains("(and (not (p ?x)) (q ?x))"), "{text}");
    }

    #[test]
    fn emission_is_order_independent() {
        let a = parse_domain(
            "(define (domain o) (:predicates (q) (p)) (:action b :parameters () :precondition (and (q) (p)) :effect ()) (:action a :parameters () :precondition () :effect (p)))",
        )
        .unwrap();
        let b = parse_domain(
            "(define (domain o) (:predicates (p) (q)) (:action a :parameters () :precondition () :effect (p)) (:action b :parameters () :precondition (and (p) (q)) :effect ()))",
        )
        .unwrap();
        assert_eq!(emit_domain(&a), emit_domain(&b));
    }
}
