use std::collections::HashMap;

use crate::grammar::{Grammar, GrammarError, Symbol};
use crate::regex_fsm::{compile_regex, Fsm};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Sym {
    Term(u32),
    Rule(u32),
}

/// Grammar lowered to numbered rules, productions and terminal automata.
#[derive(Debug)]
pub(crate) struct Compiled {
    pub terms: Vec<Fsm>,
    pub prods: Vec<Vec<Sym>>,
    pub rule_prods: Vec<Vec<u32>>,
    pub rule_names: Vec<String>,
    /// `suffix_nullable[p][d]`: symbols `d..` of production `p` derive the
    /// empty string.
    pub suffix_nullable: Vec<Vec<bool>>,
    pub start: u32,
}

impl Compiled {
    pub fn new(g: &Grammar) -> Result<Self, GrammarError> {
        let rule_ids: HashMap<&str, u32> = g
            .rules()
            .iter()
            .enumerate()
            .map(|(i, r)| (r.name.as_str(), i as u32))
            .collect();
        let mut terms = Vec::new();
        let mut term_ids: HashMap<Symbol, u32> = HashMap::new();
        let mut prods = Vec::new();
        let mut prod_rule = Vec::new();
        let mut rule_prods = vec![Vec::new(); g.rules().len()];

        for (ri, rule) in g.rules().iter().enumerate() {
            for alt in &rule.alts {
                let mut syms = Vec::with_capacity(alt.len());
                for s in alt {
                    match s {
                        Symbol::Literal(b) if b.is_empty() => {}
                        Symbol::Rule(n) => syms.push(Sym::Rule(
                            *rule_ids
                                .get(n.as_str())
                                .ok_or_else(|| GrammarError::UndefinedRule(n.clone()))?,
                        )),
                        lit_or_pat => {
                            let id = match term_ids.get(lit_or_pat) {
                                Some(&id) => id,
                                None => {
                                    let fsm = match lit_or_pat {
                                        Symbol::Literal(b) => Fsm::literal(b),
                                        Symbol::Pattern(p) => {
                                            compile_regex(p).map_err(|source| {
                                                GrammarError::Regex {
                                                    pattern: p.clone(),
                                                    source,
                                                }
                                            })?
                                        }
                                        Symbol::Rule(_) => unreachable!(),
                                    };
                                    let id = terms.len() as u32;
                                    terms.push(fsm);
                                    term_ids.insert(lit_or_pat.clone(), id);
                                    id
                                }
                            };
                            syms.push(Sym::Term(id));
                        }
                    }
                }
                rule_prods[ri].push(prods.len() as u32);
                prods.push(syms);
                prod_rule.push(ri as u32);
            }
        }

        let term_nullable: Vec<bool> = terms.iter().map(|f| f.is_accepting(f.start())).collect();
        let mut rule_nullable = vec![false; rule_prods.len()];
        loop {
            let mut changed = false;
            for (p, syms) in prods.iter().enumerate() {
                let r = prod_rule[p] as usize;
                if rule_nullable[r] {
                    continue;
                }
                let all = syms.iter().all(|s| match *s {
                    Sym::Term(t) => term_nullable[t as usize],
                    Sym::Rule(q) => rule_nullable[q as usize],
                });
                if all {
                    rule_nullable[r] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let suffix_nullable = prods
            .iter()
            .map(|syms| {
                let mut v = vec![true; syms.len() + 1];
                for d in (0..syms.len()).rev() {
                    let n = match syms[d] {
                        Sym::Term(t) => term_nullable[t as usize],
                        Sym::Rule(q) => rule_nullable[q as usize],
                    };
                    v[d] = n && v[d + 1];
                }
                v
            })
            .collect();

        Ok(Self {
            terms,
            prods,
            rule_prods,
            rule_names: g.rules().iter().map(|r| r.name.clone()).collect(),
            suffix_nullable,
            start: rule_ids[g.start()],
        })
    }

    /// Total number of terminal automaton states: the positions tokens are
    /// classified at.
    pub fn num_positions(&self) -> usize {
        self.terms.iter().map(|f| f.num_states()).sum()
    }
}
