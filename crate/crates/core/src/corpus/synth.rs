//! Seeded synthetic rule documents.
//!
//! Every rule EDU states one condition (a unique `cN` token). Discourse links
//! attach each EDU to an earlier one; `alternation` links join EDUs into
//! disjunctive groups, every other relation is conjunctive. The scenario and
//! the dialog history state facts about some conditions, and the labels are
//! derived from those facts by [`decide`].

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use super::{Answer, CorpusError, Decision, EntailmentState, Example, GoldSpan, HistoryTurn};
use crate::graph::{DiscourseLink, RelationType};
use crate::span::gold_span_label;

use EntailmentState::{Contradiction as C, Entailment as E, Unmentioned as U};

const SUBJECTS: [&[&str]; 4] = [&["you", "must"], &["applicants", "must"], &["you", "need", "to"], &["must"]];
const VERBS: [&str; 4] = ["be", "have", "hold", "meet"];
const RELEVANT: [&[&str]; 4] = [
    &["can", "i", "apply"],
    &["am", "i", "eligible"],
    &["do", "i", "qualify"],
    &["can", "i", "get", "this", "benefit"],
];
const IRRELEVANT: [&[&str]; 4] = [
    &["what", "time", "does", "the", "office", "open"],
    &["how", "do", "i", "reset", "my", "password"],
    &["where", "is", "the", "nearest", "branch"],
    &["who", "is", "my", "caseworker"],
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub examples: usize,
    pub min_edus: usize,
    pub max_edus: usize,
    /// Size of the condition-token pool each document draws from.
    pub conditions: usize,
    /// Target frequencies of Yes, No, Inquire, Irrelevant.
    pub decision_priors: [f64; 4],
    pub relation_weights: BTreeMap<RelationType, f64>,
    /// Chance that a known fact is stated in the scenario rather than the history.
    pub scenario_rate: f64,
    pub max_scenario_facts: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        use RelationType::*;
        Self {
            examples: 1000,
            min_edus: 2,
            max_edus: 4,
            conditions: 24,
            decision_priors: [0.28, 0.28, 0.32, 0.12],
            relation_weights: [
                (Continuation, 0.35),
                (Alternation, 0.2),
                (Elaboration, 0.1),
                (Explanation, 0.1),
                (Contrast, 0.1),
                (Comment, 0.1),
                (Conditional, 0.05),
            ]
            .into_iter()
            .collect(),
            scenario_rate: 0.3,
            max_scenario_facts: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let err = |m: String| Err(CorpusError::Config(m));
        if self.min_edus == 0 || self.min_edus > self.max_edus {
            return err(format!("empty EDU range {}..={}", self.min_edus, self.max_edus));
        }
        if self.conditions < self.max_edus {
            return err(format!(
                "{} conditions cannot fill {} distinct EDUs",
                self.conditions, self.max_edus
            ));
        }
        if self.decision_priors.iter().any(|p| !(p.is_finite() && *p >= 0.0))
            || self.decision_priors.iter().sum::<f64>() <= 0.0
        {
            return err(format!("bad decision priors {:?}", self.decision_priors));
        }
        let weights: Vec<f64> = self.relation_weights.values().copied().collect();
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return err("relation weights must be finite and nonnegative".into());
        }
        if self.max_edus > 1 && weights.iter().sum::<f64>() <= 0.0 {
            return err("no relation type has positive weight".into());
        }
        if !(0.0..=1.0).contains(&self.scenario_rate) {
            return err(format!("scenario_rate {} outside [0, 1]", self.scenario_rate));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, CorpusError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CorpusError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Group id per EDU, where groups are the connected components of the
/// alternation links. Ids are the smallest EDU index in each group.
pub fn alternation_groups(edu_count: usize, links: &[DiscourseLink]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..edu_count).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for l in links.iter().filter(|l| l.relation == RelationType::Alternation) {
        let (a, b) = (find(&mut parent, l.head), find(&mut parent, l.dep));
        let (lo, hi) = (a.min(b), a.max(b));
        parent[hi] = lo;
    }
    (0..edu_count).map(|x| find(&mut parent, x)).collect()
}

/// A disjunctive group is entailed if any member is, contradicted only if
/// all members are, and unmentioned otherwise.
fn group_state(members: impl Iterator<Item = EntailmentState>) -> EntailmentState {
    let mut best = C;
    for s in members {
        match s {
            E => return E,
            U => best = U,
            C => {}
        }
    }
    best
}

fn group_states(states: &[EntailmentState], groups: &[usize]) -> BTreeMap<usize, EntailmentState> {
    let mut ids: Vec<usize> = groups.to_vec();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|g| {
            let members = states.iter().zip(groups).filter(|(_, gg)| **gg == g).map(|(s, _)| *s);
            (g, group_state(members))
        })
        .collect()
}

/// Decision implied by per-EDU states and the rule structure.
///
/// Any contradicted group gives No; otherwise any unmentioned group gives
/// Inquire; otherwise Yes. Irrelevant questions override all of it.
pub fn decide(states: &[EntailmentState], links: &[DiscourseLink], relevant: bool) -> Decision {
    if !relevant {
        return Decision::Irrelevant;
    }
    let gs = group_states(states, &alternation_groups(states.len(), links));
    if gs.values().any(|s| *s == C) {
        Decision::No
    } else if gs.values().any(|s| *s == U) {
        Decision::Inquire
    } else {
        Decision::Yes
    }
}

/// First unmentioned EDU whose group is still unresolved.
pub fn underspecified_edu(states: &[EntailmentState], links: &[DiscourseLink]) -> Option<usize> {
    let groups = alternation_groups(states.len(), links);
    let gs = group_states(states, &groups);
    (0..states.len()).find(|&k| states[k] == U && gs[&groups[k]] == U)
}

pub fn is_irrelevant_question<S: AsRef<str>>(question: &[S]) -> bool {
    IRRELEVANT
        .iter()
        .any(|t| t.len() == question.len() && t.iter().zip(question).all(|(a, b)| *a == b.as_ref()))
}

fn verb_of(condition: usize) -> &'static str {
    VERBS[condition % VERBS.len()]
}

fn strings(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

fn followup_question(condition: usize) -> Vec<String> {
    vec!["do".into(), "you".into(), verb_of(condition).into(), format!("c{condition}")]
}

fn member_states(rng: &mut Pcg64, target: EntailmentState, size: usize) -> Vec<EntailmentState> {
    let others: &[EntailmentState] = match target {
        E => &[E, C, U],
        U => &[U, C],
        C => &[C],
    };
    let pinned = rng.random_range(0..size);
    (0..size)
        .map(|i| if i == pinned { target } else { *others.choose(rng).unwrap() })
        .collect()
}

fn sample_states(
    rng: &mut Pcg64,
    decision: Decision,
    groups: &[usize],
) -> Vec<EntailmentState> {
    let mut ids: Vec<usize> = groups.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let forced = rng.random_range(0..ids.len());
    let targets: Vec<EntailmentState> = (0..ids.len())
        .map(|gi| match decision {
            Decision::Yes => E,
            Decision::No if gi == forced => C,
            Decision::No => *[E, U, C].choose(rng).unwrap(),
            Decision::Inquire if gi == forced => U,
            Decision::Inquire => *[E, U].choose(rng).unwrap(),
            Decision::Irrelevant => *[E, U, C].choose(rng).unwrap(),
        })
        .collect();
    let mut states = vec![U; groups.len()];
    for (gi, g) in ids.iter().enumerate() {
        let members: Vec<usize> = (0..groups.len()).filter(|&k| groups[k] == *g).collect();
        for (k, s) in members.iter().zip(member_states(rng, targets[gi], members.len())) {
            states[*k] = s;
        }
    }
    states
}

fn generate_one(rng: &mut Pcg64, cfg: &SynthConfig, relations: &[(RelationType, f64)], id: String) -> Example {
    let n = rng.random_range(cfg.min_edus..=cfg.max_edus);
    let mut pool: Vec<usize> = (0..cfg.conditions).collect();
    pool.shuffle(rng);
    let conditions = &pool[..n];

    let rule_edus: Vec<Vec<String>> = conditions
        .iter()
        .map(|&c| {
            let mut edu = strings(SUBJECTS.choose(rng).unwrap());
            edu.push(verb_of(c).into());
            edu.push(format!("c{c}"));
            edu
        })
        .collect();

    let mut links = Vec::with_capacity(n.saturating_sub(1));
    if n > 1 {
        let dist = WeightedIndex::new(relations.iter().map(|(_, w)| *w)).expect("validated weights");
        for dep in 1..n {
            let head = rng.random_range(0..dep);
            links.push(DiscourseLink::new(head, dep, relations[dist.sample(rng)].0));
        }
    }

    let priors = WeightedIndex::new(cfg.decision_priors).expect("validated priors");
    let decision = Decision::ALL[priors.sample(rng)];
    let groups = alternation_groups(n, &links);
    let states = sample_states(rng, decision, &groups);

    let mut scenario_facts: Vec<Vec<String>> = Vec::new();
    let mut history = Vec::new();
    for (k, &c) in conditions.iter().enumerate() {
        let positive = match states[k] {
            E => true,
            C => false,
            U => continue,
        };
        if scenario_facts.len() < cfg.max_scenario_facts && rng.random_bool(cfg.scenario_rate) {
            let mut fact = strings(if positive { &["i"] } else { &["i", "do", "not"] });
            fact.push(verb_of(c).into());
            fact.push(format!("c{c}"));
            scenario_facts.push(fact);
        } else {
            let answer = if positive { Answer::Yes } else { Answer::No };
            history.push(HistoryTurn { question: followup_question(c), answer });
        }
    }
    history.shuffle(rng);
    let scenario = scenario_facts.join(&"and".to_string());

    let question = if decision == Decision::Irrelevant {
        strings(IRRELEVANT.choose(rng).unwrap())
    } else {
        strings(RELEVANT.choose(rng).unwrap())
    };

    let gold_span = (decision == Decision::Inquire).then(|| {
        let k = underspecified_edu(&states, &links).expect("Inquire has an open condition");
        let label = gold_span_label(&rule_edus, &followup_question(conditions[k]))
            .expect("non-empty follow-up question");
        debug_assert_eq!(label.edu, k);
        GoldSpan { edu: label.edu, start: label.start, end: label.end }
    });

    Example {
        tree_id: id.clone(),
        example_id: id,
        rule_edus,
        relation_links: links,
        question,
        scenario,
        history,
        gold_entailment: states,
        gold_decision: decision,
        gold_span,
    }
}

/// `config.examples` examples, identical for identical `(config, seed)`.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<Vec<Example>, CorpusError> {
    config.validate()?;
    let relations: Vec<(RelationType, f64)> = config
        .relation_weights
        .iter()
        .filter(|(_, w)| **w > 0.0)
        .map(|(r, w)| (*r, *w))
        .collect();
    let mut rng = Pcg64::seed_from_u64(seed);
    Ok((0..config.examples)
        .map(|i| generate_one(&mut rng, config, &relations, format!("syn-{seed}-{i}")))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig { examples: 50, ..Default::default() };
        assert_eq!(generate_synthetic(&cfg, 7).unwrap(), generate_synthetic(&cfg, 7).unwrap());
        assert_ne!(generate_synthetic(&cfg, 7).unwrap(), generate_synthetic(&cfg, 8).unwrap());
    }

    #[test]
    fn empty_ranges_are_config_errors() {
        let bad = SynthConfig { min_edus: 3, max_edus: 2, ..Default::default() };
        assert!(matches!(generate_synthetic(&bad, 0), Err(CorpusError::Config(_))));
        let bad = SynthConfig { min_edus: 0, ..Default::default() };
        assert!(generate_synthetic(&bad, 0).is_err());
        let bad = SynthConfig { decision_priors: [0.0; 4], ..Default::default() };
        assert!(generate_synthetic(&bad, 0).is_err());
        let bad = SynthConfig { relation_weights: BTreeMap::new(), ..Default::default() };
        assert!(generate_synthetic(&bad, 0).is_err());
    }

    #[test]
    fn toml_config() {
        let cfg = SynthConfig::from_toml(
            "examples = 5\nmax_edus = 3\n[relation_weights]\ncontinuation = 1.0\nalternation = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.examples, 5);
        assert_eq!(cfg.relation_weights[&RelationType::Alternation], 0.5);
        assert!(SynthConfig::from_toml("edus = 3").is_err());
    }

    #[test]
    fn decision_rule() {
        use RelationType::{Alternation, Continuation};
        let conj = [DiscourseLink::new(0, 1, Continuation)];
        let alt = [DiscourseLink::new(0, 1, Alternation)];
        assert_eq!(decide(&[E, E], &conj, true), Decision::Yes);
        assert_eq!(decide(&[E, C], &conj, true), Decision::No);
        assert_eq!(decide(&[U, C], &conj, true), Decision::No);
        assert_eq!(decide(&[E, U], &conj, true), Decision::Inquire);
        assert_eq!(decide(&[E, C], &alt, true), Decision::Yes);
        assert_eq!(decide(&[U, C], &alt, true), Decision::Inquire);
        assert_eq!(decide(&[C, C], &alt, true), Decision::No);
        assert_eq!(decide(&[E, E], &alt, false), Decision::Irrelevant);
        assert_eq!(underspecified_edu(&[E, U, U], &[DiscourseLink::new(0, 1, Alternation)]), Some(2));
    }

    #[test]
    fn groups_follow_alternation_components() {
        use RelationType::{Alternation, Contrast};
        let links = [
            DiscourseLink::new(0, 1, Contrast),
            DiscourseLink::new(1, 3, Alternation),
            DiscourseLink::new(3, 2, Alternation),
        ];
        assert_eq!(alternation_groups(4, &links), [0, 1, 1, 1]);
    }
}
