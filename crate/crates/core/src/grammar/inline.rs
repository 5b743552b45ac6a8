use std::collections::HashMap;

use super::{Grammar, Production, Rule, Symbol};

/// Rules referenced at most this many times are inlined by default.
pub const DEFAULT_INLINE_MAX_REFS: usize = 4;

/// Host rules never grow past this many alternatives through inlining.
const MAX_ALTS: usize = 64;

/// Substitutes small non-recursive rules into the places that reference
/// them. The start rule and any rule that can reach itself are kept. The
/// language is unchanged; only the shape of the rule set differs.
pub fn inline_rules(g: &Grammar, max_refs: usize) -> Grammar {
    let mut rules: Vec<Rule> = g.rules().to_vec();
    let start = g.start().to_string();
    if max_refs == 0 {
        return Grammar::new_unchecked(rules, start);
    }
    loop {
        let cur = Grammar::new_unchecked(rules.clone(), start.clone());
        let counts = cur.ref_counts();
        let candidate = rules.iter().position(|r| {
            let n = counts.get(r.name.as_str()).copied().unwrap_or(0);
            r.name != start
                && n > 0
                && n <= max_refs
                && !cur.reachable_from(&r.name).contains(r.name.as_str())
                && fits(&rules, r)
        });
        let Some(i) = candidate else { break };
        let victim = rules.remove(i);
        for host in &mut rules {
            host.alts = substitute(&host.alts, &victim);
        }
    }
    Grammar::new_unchecked(rules, start)
}

fn expand(alt: &Production, victim: &Rule) -> Vec<Production> {
    let mut out: Vec<Production> = vec![Vec::new()];
    for sym in alt {
        match sym {
            Symbol::Rule(n) if *n == victim.name => {
                out = out
                    .iter()
                    .flat_map(|prefix| {
                        victim.alts.iter().map(move |v| {
                            let mut p = prefix.clone();
                            p.extend(v.iter().cloned());
                            p
                        })
                    })
                    .collect();
            }
            s => out.iter_mut().for_each(|p| p.push(s.clone())),
        }
    }
    out
}

fn substitute(alts: &[Production], victim: &Rule) -> Vec<Production> {
    let mut out: Vec<Production> = Vec::new();
    for alt in alts {
        for p in expand(alt, victim) {
            if !out.contains(&p) {
                out.push(p);
            }
        }
    }
    out
}

fn fits(rules: &[Rule], victim: &Rule) -> bool {
    let mut sizes: HashMap<&str, usize> = HashMap::new();
    for host in rules.iter().filter(|h| h.name != victim.name) {
        let mut total = 0usize;
        for alt in &host.alts {
            let k = alt
                .iter()
                .filter(|s| matches!(s, Symbol::Rule(n) if *n == victim.name))
                .count() as u32;
            total = total.saturating_add(victim.alts.len().saturating_pow(k));
        }
        sizes.insert(host.name.as_str(), total);
    }
    sizes.values().all(|&n| n <= MAX_ALTS)
}
