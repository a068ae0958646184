//! Lexicon-driven reading of user prompts into goal specifications.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::domain::{Attribute, GoalSpec, ItemRequest, ObjectClass, Predicate, Quantity, TaskKind, COLOR_PALETTE};
use crate::lowlevel::normalize;
use crate::simenv::{sandwich_order, TaskCatalog};

const NEGATIONS: &[&str] = &[
    "not", "no", "dont", "without", "except", "allergic", "leave", "hold", "skip", "avoid", "never", "cant",
    "isnt", "nothing", "none",
];
const STOPWORDS: &[&str] = &["can", "take", "up", "out", "one", "some", "the", "a", "it", "me", "get"];
const NUMBERS: &[(&str, u32)] = &[
    ("a", 1),
    ("an", 1),
    ("one", 1),
    ("two", 2),
    ("three", 3),
    ("four", 4),
    ("five", 5),
    ("couple", 2),
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Term {
    Classes(Vec<ObjectClass>),
    Name(String),
    Attr(Attribute),
    Color(String),
}

impl Term {
    pub fn predicate(&self) -> Predicate {
        match self {
            Term::Classes(cs) => Predicate::classes(cs),
            Term::Name(n) => Predicate::Name(n.clone()),
            Term::Attr(a) => Predicate::Attribute(*a),
            Term::Color(c) => Predicate::Color(c.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mention {
    pub term: Term,
    pub negated: bool,
    pub count: Option<u32>,
}

/// What a prompt was understood to mean beyond the goal itself.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reading {
    pub recognized: bool,
    pub utterance: Option<String>,
}

fn lexicon(catalog: &TaskCatalog) -> Vec<(Vec<String>, Term)> {
    let mut out: Vec<(String, Term)> = Vec::new();
    let names: Vec<&str> = catalog.pool.iter().map(|i| i.name.as_str()).collect();
    for n in &names {
        out.push((n.to_string(), Term::Name(n.to_string())));
        if !n.ends_with('s') {
            out.push((format!("{n}s"), Term::Name(n.to_string())));
        } else {
            out.push((n.trim_end_matches('s').to_string(), Term::Name(n.to_string())));
        }
        let words: Vec<&str> = n.split(' ').collect();
        if words.len() > 1 {
            let head = words[words.len() - 1];
            if !STOPWORDS.contains(&head) {
                out.push((head.to_string(), Term::Name(head.to_string())));
                out.push((format!("{head}s"), Term::Name(head.to_string())));
            }
            let first = words[0];
            let unique = names.iter().filter(|m| m.split(' ').next() == Some(first)).count() == 1;
            if unique && !STOPWORDS.contains(&first) && !COLOR_PALETTE.contains(&first) && first != "yellow" {
                out.push((first.to_string(), Term::Name(n.to_string())));
            }
        }
    }
    if catalog.task == TaskKind::GroceryShopping {
        out.push(("kit kat".into(), Term::Name("kitkat".into())));
        out.push(("kit kats".into(), Term::Name("kitkat".into())));
    }
    let classes: &[(&str, &[ObjectClass])] = &[
        ("trash", &[ObjectClass::Trash]),
        ("garbage", &[ObjectClass::Trash]),
        ("rubbish", &[ObjectClass::Trash]),
        ("dishes", &[ObjectClass::Dish, ObjectClass::Utensil]),
        ("dish", &[ObjectClass::Dish, ObjectClass::Utensil]),
        ("utensils", &[ObjectClass::Utensil]),
        ("utensil", &[ObjectClass::Utensil]),
        ("cutlery", &[ObjectClass::Utensil]),
        ("silverware", &[ObjectClass::Utensil]),
    ];
    if catalog.task == TaskKind::TableBussing {
        for (w, cs) in classes {
            out.push((w.to_string(), Term::Classes(cs.to_vec())));
        }
    }
    let attrs: &[(&str, Attribute)] = &[
        ("sweet", Attribute::Sweet),
        ("sweets", Attribute::Sweet),
        ("candy", Attribute::Sweet),
        ("sugary", Attribute::Sweet),
        ("salty", Attribute::Salty),
        ("something to drink", Attribute::Drink),
        ("drink", Attribute::Drink),
        ("drinks", Attribute::Drink),
        ("beverage", Attribute::Drink),
        ("thirsty", Attribute::Drink),
        ("meat", Attribute::Meat),
        ("dairy", Attribute::Dairy),
    ];
    for (w, a) in attrs {
        out.push((w.to_string(), Term::Attr(*a)));
    }
    for c in COLOR_PALETTE {
        out.push((c.to_string(), Term::Color(c.to_string())));
    }
    out.push(("yellow".into(), Term::Color("yellowish".into())));
    let mut lex: Vec<(Vec<String>, Term)> =
        out.into_iter().map(|(k, t)| (k.split(' ').map(String::from).collect(), t)).collect();
    lex.sort_by_key(|(k, _)| std::cmp::Reverse(k.len()));
    lex
}

fn clauses(text: &str) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for part in text.split([',', '.', ';', '?', '!']) {
        let words: Vec<String> = normalize(part).split(' ').filter(|w| !w.is_empty()).map(String::from).collect();
        let mut cur = Vec::new();
        for w in words {
            if w == "but" {
                out.push(std::mem::take(&mut cur));
            } else {
                cur.push(w);
            }
        }
        out.push(cur);
    }
    out.retain(|c: &Vec<String>| !c.is_empty());
    out
}

fn parse_count(w: &str) -> Option<u32> {
    w.parse().ok().or_else(|| NUMBERS.iter().find(|(k, _)| *k == w).map(|(_, n)| *n))
}

/// Finds lexicon terms in `text` with their polarity and quantity.
pub fn mentions(text: &str, catalog: &TaskCatalog) -> Vec<Mention> {
    let lex = lexicon(catalog);
    let mut found = Vec::new();
    for clause in clauses(text) {
        let mut i = 0;
        let mut negated = false;
        while i < clause.len() {
            if NEGATIONS.contains(&clause[i].as_str()) {
                negated = true;
            }
            let hit = lex.iter().find(|(k, _)| clause.len() - i >= k.len() && clause[i..i + k.len()] == k[..]);
            match hit {
                Some((k, term)) => {
                    let mut count = None;
                    let mut j = i;
                    while j > 0 && count.is_none() {
                        j -= 1;
                        let w = clause[j].as_str();
                        if let Some(n) = parse_count(w) {
                            count = Some(n);
                        } else if !matches!(w, "of" | "bag" | "bags" | "bottle" | "bottles" | "pack" | "packs" | "piece" | "slice" | "can" | "cans") {
                            break;
                        }
                    }
                    found.push(Mention { term: term.clone(), negated, count });
                    i += k.len();
                }
                None => i += 1,
            }
        }
    }
    found
}

fn has_phrase(text: &str, phrase: &str) -> bool {
    format!(" {} ", normalize(text)).contains(&format!(" {phrase} "))
}

/// Dietary restrictions stated anywhere in the text.
pub fn diet(text: &str) -> BTreeSet<Attribute> {
    let mut out = BTreeSet::new();
    if has_phrase(text, "vegetarian") || has_phrase(text, "veggie") {
        out.insert(Attribute::Meat);
    }
    if has_phrase(text, "vegan") {
        out.insert(Attribute::Meat);
        out.insert(Attribute::Dairy);
    }
    if has_phrase(text, "lactose") || has_phrase(text, "dairy free") {
        out.insert(Attribute::Dairy);
    }
    out
}

fn first_with(catalog: &TaskCatalog, attr: Attribute) -> Option<&str> {
    catalog.pool.iter().find(|i| i.attributes.contains(&attr)).map(|i| i.name.as_str())
}

/// Which clauses to honor when reading a prompt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strictness {
    Full,
    /// Exclusions, "only" scoping and diets are dropped; positive requests stay.
    IgnoreConstraints,
}

pub fn parse_goal(prompt: &str, catalog: &TaskCatalog) -> GoalSpec {
    read_prompt(prompt, catalog, Strictness::Full).0
}

pub fn read_prompt(prompt: &str, catalog: &TaskCatalog, strict: Strictness) -> (GoalSpec, Reading) {
    let mut goal = catalog.default_goal();
    let ms = mentions(prompt, catalog);
    let diet = diet(prompt);
    let keep_constraints = strict == Strictness::Full;
    let pos: Vec<&Mention> = ms.iter().filter(|m| !m.negated).collect();
    let neg: Vec<&Mention> = ms.iter().filter(|m| m.negated).collect();
    let mut recognized = !ms.is_empty() || !diet.is_empty();
    let mut utterance = None;

    match catalog.task {
        TaskKind::TableBussing => {
            recognized |= ["clean", "bus", "tidy", "clear"].iter().any(|w| has_phrase(prompt, w));
            if keep_constraints {
                let mut exclude: Vec<Predicate> = neg.iter().map(|m| m.term.predicate()).collect();
                if !pos.is_empty() {
                    let include = flatten_any(pos.iter().map(|m| m.term.predicate()).collect());
                    exclude.push(include.clone().negate());
                    goal.include_predicate = include;
                }
                if !exclude.is_empty() {
                    goal.exclude_predicate = flatten_any(exclude);
                }
            }
        }
        TaskKind::SandwichMaking => {
            recognized |= has_phrase(prompt, "sandwich");
            let fillings: Vec<Predicate> = pos
                .iter()
                .filter(|m| !matches!(&m.term, Term::Name(n) if n == "bread"))
                .filter(|m| matches!(m.term, Term::Name(_)))
                .map(|m| m.term.predicate())
                .collect();
            let sel = if fillings.is_empty() { Predicate::Any } else { flatten_any(fillings) };
            goal.required_items = sandwich_order(sel);
            goal.closed = ["thats all", "thats it", "no more"].iter().any(|p| has_phrase(prompt, p));
            if keep_constraints {
                goal.forbidden_attributes = diet.clone();
                let exclude: Vec<Predicate> = neg.iter().map(|m| m.term.predicate()).collect();
                if !exclude.is_empty() {
                    goal.exclude_predicate = flatten_any(exclude);
                }
            }
        }
        TaskKind::GroceryShopping => {
            let mut requests: Vec<ItemRequest> = Vec::new();
            for m in pos.iter().filter(|m| matches!(m.term, Term::Name(_) | Term::Attr(_))) {
                let sel = m.term.predicate();
                let n = m.count.unwrap_or(1);
                // "thirsty ... something to drink" names one request twice
                match requests.iter_mut().find(|r| r.selector == sel) {
                    Some(r) => r.quantity = Quantity::Count(n.max(count_of(r))),
                    None => requests.push(ItemRequest::count(sel, n)),
                }
            }
            goal.required_items = requests;
            if keep_constraints {
                goal.forbidden_attributes = diet.clone();
                let exclude: Vec<Predicate> = neg.iter().map(|m| m.term.predicate()).collect();
                if !exclude.is_empty() {
                    goal.exclude_predicate = flatten_any(exclude);
                }
            }
        }
    }

    if !recognized {
        utterance = Some("Sorry, I didn't catch that. What would you like me to do?".to_string());
        goal = catalog.default_goal();
    } else if keep_constraints {
        if diet.contains(&Attribute::Dairy) {
            if let Some(n) = first_with(catalog, Attribute::Dairy) {
                utterance = Some(format!("Sure, I won't put {n} on it."));
            }
        } else if let Some(m) = neg.iter().find(|m| matches!(m.term, Term::Name(_))) {
            if let Term::Name(n) = &m.term {
                utterance = Some(format!("Sure, no {n}."));
            }
        }
    }
    if recognized && utterance.is_none() {
        utterance = Some("Sure.".to_string());
    }
    (goal, Reading { recognized, utterance })
}

fn count_of(r: &ItemRequest) -> u32 {
    match r.quantity {
        Quantity::Count(n) => n,
        Quantity::EachKind => 1,
    }
}

fn flatten_any(preds: Vec<Predicate>) -> Predicate {
    if preds.len() == 1 {
        preds.into_iter().next().expect("one")
    } else {
        Predicate::AnyOf(preds)
    }
}
