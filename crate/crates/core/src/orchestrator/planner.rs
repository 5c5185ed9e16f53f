//! The Planner's bounded loop: plan cards, tool execution against the
//! evidence budget, and answer composition. The Talker's shallow drafting
//! lives here too so both lanes share one notion of evidence.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::scenario::ScenarioSuite;
use super::OrchestratorError;
use crate::policy::{EvidenceState, ToolAction};
use crate::router::HashedNgrams;
use crate::taxonomy::{Cd, ComplexityLabel, Te};
use crate::text::{is_stopword, tokenize};
use crate::tools::{
    cross_session_aggregate, hybrid_search, split_sentences, web_search_mock, Document, RetrievalIndex, Snippet,
    WebFixtures,
};

pub const MAX_HOPS: usize = 3;
pub const EVIDENCE_BUDGET: usize = 6;
pub const DEFAULT_TAU: f64 = 0.8;
/// Snippets requested from each tool call.
pub const TOOL_TOP_K: usize = 6;
/// Turns of context the Talker sees.
pub const TALKER_WINDOW: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopCriteria {
    pub max_hops: usize,
    pub confidence_tau: f64,
    /// Stop as soon as a planning hop adds nothing.
    pub no_new_evidence: bool,
}

impl Default for StopCriteria {
    fn default() -> Self {
        Self {
            max_hops: MAX_HOPS,
            confidence_tau: DEFAULT_TAU,
            no_new_evidence: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanCard {
    pub analysis: ComplexityLabel,
    /// Concrete tools to call in the first planning hop.
    pub tool_chain: Vec<ToolAction>,
    pub evidence_sources: Vec<String>,
    pub stop: StopCriteria,
}

fn source_name(tool: ToolAction) -> &'static str {
    match tool {
        ToolAction::KbRetrieval => "knowledge base",
        ToolAction::CrossMeeting => "past meetings",
        ToolAction::Web => "web",
        ToolAction::None | ToolAction::Combo => "meeting context",
    }
}

impl PlanCard {
    /// Expands composite actions, drops duplicates and keeps order.
    pub fn new(analysis: ComplexityLabel, actions: &[ToolAction], tau: f64) -> Result<Self, OrchestratorError> {
        let mut chain: Vec<ToolAction> = Vec::new();
        for a in actions {
            for t in a.tools() {
                if !chain.contains(t) {
                    chain.push(*t);
                }
            }
        }
        let mut evidence_sources = vec!["meeting context".to_string()];
        evidence_sources.extend(chain.iter().map(|t| source_name(*t).to_string()));
        let card = Self {
            analysis,
            tool_chain: chain,
            evidence_sources,
            stop: StopCriteria {
                confidence_tau: tau,
                ..StopCriteria::default()
            },
        };
        card.validate()?;
        Ok(card)
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        if self.stop.max_hops != MAX_HOPS {
            return Err(OrchestratorError::BadPlan(format!("max_hops {}", self.stop.max_hops)));
        }
        if self.tool_chain.len() > 3 || self.tool_chain.iter().any(|t| t.tools() != [*t]) {
            return Err(OrchestratorError::BadPlan(format!("tool chain {:?}", self.tool_chain)));
        }
        if !(self.stop.confidence_tau.is_finite() && (0.0..=1.0).contains(&self.stop.confidence_tau)) {
            return Err(OrchestratorError::BadPlan(format!("tau {}", self.stop.confidence_tau)));
        }
        Ok(())
    }

    /// The card as the Planner verbalizes it during the Analyse hop.
    pub fn render(&self) -> String {
        let a = &self.analysis;
        let tools = if self.tool_chain.is_empty() {
            "none".to_string()
        } else {
            self.tool_chain.iter().map(|t| source_name(*t)).collect::<Vec<_>>().join(", ")
        };
        format!(
            "Plan: load {:?}, context {:?}, domain {:?}, effort {:?}; tools: {tools}; stop at {} or {} hops.",
            a.cl, a.cd, a.dk, a.te, self.stop.confidence_tau, self.stop.max_hops
        )
    }
}

/// Simulated tool latencies in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToolLatency {
    pub kb_ms: f64,
    pub cross_ms: f64,
    pub web_ms: f64,
}

impl Default for ToolLatency {
    fn default() -> Self {
        Self {
            kb_ms: 300.0,
            cross_ms: 600.0,
            web_ms: 1200.0,
        }
    }
}

impl ToolLatency {
    pub fn of(&self, tool: ToolAction) -> f64 {
        match tool {
            ToolAction::KbRetrieval => self.kb_ms,
            ToolAction::CrossMeeting => self.cross_ms,
            ToolAction::Web => self.web_ms,
            ToolAction::None => 0.0,
            ToolAction::Combo => self.kb_ms + self.cross_ms + self.web_ms,
        }
    }
}

/// The retrieval sources a query can draw on.
#[derive(Debug, Clone)]
pub struct Toolbox {
    kb: Option<RetrievalIndex>,
    history: BTreeMap<String, RetrievalIndex>,
    web: WebFixtures,
    /// Lexical share of the hybrid KB score.
    pub mix: f64,
    pub latency: ToolLatency,
}

/// Snippets from one tool call with scores scaled so the best is 1, plus
/// the cross-session hit rate when the call was a cross-meeting search.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolResult {
    pub snippets: Vec<Snippet>,
    pub hit_rate: Option<f64>,
}

fn normalized(mut snippets: Vec<Snippet>) -> Vec<Snippet> {
    let top = snippets.iter().map(|s| s.score).fold(0.0, f64::max);
    for s in &mut snippets {
        s.score = if top > 0.0 { (s.score / top).clamp(0.0, 1.0) } else { 0.0 };
    }
    snippets
}

impl Toolbox {
    pub fn new(kb: Vec<Document>, history: BTreeMap<String, Vec<Document>>, web: Vec<Document>, embedder: HashedNgrams) -> Self {
        Self {
            kb: (!kb.is_empty()).then(|| RetrievalIndex::build(kb, embedder)),
            history: history
                .into_iter()
                .map(|(m, docs)| (m, RetrievalIndex::build(docs, embedder)))
                .collect(),
            web: WebFixtures::new(web),
            mix: 0.5,
            latency: ToolLatency::default(),
        }
    }

    pub fn from_suite(suite: &ScenarioSuite, embedder: HashedNgrams) -> Self {
        Self::new(suite.kb.clone(), suite.history_by_meeting(), suite.web.clone(), embedder)
    }

    /// Cheap lookups made before any tool is chosen: how much of the
    /// entity one KB entry covers, and the cross-session hit rate.
    pub fn probe(&self, query: &str) -> EvidenceState {
        let entity = query_entity(query);
        let retrieval_confidence = self.kb.as_ref().map_or(0.0, |kb| kb.best_coverage(&entity));
        let cross_cache_hit_rate = cross_session_aggregate(&self.history, &entity_key(&entity), 1)
            .map_or(0.0, |r| r.cross_cache_hit_rate);
        EvidenceState {
            retrieval_confidence,
            cross_cache_hit_rate,
        }
    }

    pub fn call(&self, tool: ToolAction, query: &str) -> Result<ToolResult, OrchestratorError> {
        let entity = query_entity(query);
        match tool {
            ToolAction::KbRetrieval => {
                let kb = self.kb.as_ref().ok_or(crate::tools::ToolError::EmptyIndex)?;
                Ok(ToolResult {
                    snippets: normalized(hybrid_search(kb, query, TOOL_TOP_K, self.mix)?),
                    hit_rate: None,
                })
            }
            ToolAction::CrossMeeting => {
                let r = cross_session_aggregate(&self.history, &entity_key(&entity), TOOL_TOP_K)?;
                Ok(ToolResult {
                    snippets: normalized(r.snippets),
                    hit_rate: Some(r.cross_cache_hit_rate),
                })
            }
            ToolAction::Web => Ok(ToolResult {
                snippets: normalized(web_search_mock(&self.web, query, TOOL_TOP_K)),
                hit_rate: None,
            }),
            ToolAction::None | ToolAction::Combo => Err(OrchestratorError::BadPlan(format!("{tool:?} is not a single tool"))),
        }
    }
}

/// The entity a query is about: the two tokens after "project", or all
/// content tokens when the query names no project.
pub fn query_entity(query: &str) -> Vec<String> {
    let toks = tokenize(query);
    match toks.iter().position(|t| t == "project") {
        Some(i) if i + 2 < toks.len() + 1 && i + 1 < toks.len() => toks[i + 1..(i + 3).min(toks.len())].to_vec(),
        _ => toks.into_iter().filter(|t| !is_stopword(t)).collect(),
    }
}

/// Distinctive part of an entity for cross-session lookups: tokens with a
/// digit, or everything when there are none.
fn entity_key(entity: &[String]) -> Vec<String> {
    let numeric: Vec<String> = entity
        .iter()
        .filter(|t| t.chars().any(|c| c.is_ascii_digit()))
        .cloned()
        .collect();
    if numeric.is_empty() {
        entity.to_vec()
    } else {
        numeric
    }
}

fn mentions(text: &str, entity: &[String]) -> bool {
    if entity.is_empty() {
        return false;
    }
    let toks: Vec<String> = tokenize(text);
    // contiguous match, so "aurora 101" does not match "aurora 1010"
    toks.windows(entity.len()).any(|w| w == entity)
}

/// How the Talker would answer: a short lead-in and the recent turn that
/// overlaps the query most (latest wins ties).
pub fn talker_draft(query: &str, context: &[String]) -> String {
    let q: HashSet<String> = tokenize(query).into_iter().filter(|t| !is_stopword(t)).collect();
    let start = context.len().saturating_sub(TALKER_WINDOW);
    let best = context[start..]
        .iter()
        .map(|turn| {
            let overlap = tokenize(turn).iter().filter(|t| q.contains(*t)).collect::<HashSet<_>>().len();
            (overlap, turn)
        })
        .fold(None, |acc: Option<(usize, &String)>, (o, t)| match acc {
            Some((bo, _)) if bo > o => acc,
            _ => Some((o, t)),
        });
    match best {
        Some((o, turn)) if o > 0 => format!("Quick answer from the last few minutes of this meeting: {turn}"),
        _ => "Quick answer: nothing in the last few minutes of this meeting covers that.".to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Confident,
    NoNewEvidence,
    MaxHops,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallRecord {
    pub hop: usize,
    pub tool: ToolAction,
    /// Snippets the tool returned.
    pub returned: usize,
    /// Of those, new snippets about the query's entity that fit the budget.
    pub kept: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub answer: String,
    pub hops_used: usize,
    pub evidence: EvidenceState,
    pub snippets: Vec<Snippet>,
    pub calls: Vec<ToolCallRecord>,
    pub stop: StopReason,
}

impl PlanOutcome {
    /// Tool calls grouped by hop, in order; hops without calls included.
    pub fn hop_calls(&self) -> Vec<Vec<&ToolCallRecord>> {
        (2..=self.hops_used)
            .map(|h| self.calls.iter().filter(|c| c.hop == h).collect())
            .collect()
    }
}

/// Hop 1 analyses (the card); each later hop runs tools and keeps new
/// snippets about the query's entity up to `budget`. The first planning hop
/// runs the card's chain; later ones ask `tool_policy` given the evidence
/// so far and run only tools not yet called. Compose follows the loop.
pub fn plan_loop(
    query: &str,
    context: &[String],
    card: &PlanCard,
    tools: &Toolbox,
    tool_policy: &mut dyn FnMut(&EvidenceState) -> ToolAction,
    budget: usize,
) -> PlanOutcome {
    let entity = query_entity(query);
    let mut evidence = EvidenceState::default();
    let mut snippets: Vec<Snippet> = Vec::new();
    let mut calls = Vec::new();
    let mut called: Vec<ToolAction> = Vec::new();
    let mut hops_used = 1;
    let mut stop = StopReason::MaxHops;

    while hops_used < card.stop.max_hops {
        hops_used += 1;
        let planned: Vec<ToolAction> = if hops_used == 2 {
            card.tool_chain.clone()
        } else {
            tool_policy(&evidence)
                .tools()
                .iter()
                .filter(|t| !called.contains(t))
                .copied()
                .collect()
        };
        let mut added = 0;
        for tool in planned {
            called.push(tool);
            let mut rec = ToolCallRecord {
                hop: hops_used,
                tool,
                returned: 0,
                kept: 0,
                error: None,
            };
            match tools.call(tool, query) {
                Ok(res) => {
                    rec.returned = res.snippets.len();
                    if let Some(h) = res.hit_rate {
                        evidence.cross_cache_hit_rate = evidence.cross_cache_hit_rate.max(h);
                    }
                    for s in res.snippets {
                        if snippets.len() >= budget {
                            break;
                        }
                        if mentions(&s.text, &entity) && snippets.iter().all(|k| k.source_id != s.source_id) {
                            snippets.push(s);
                            rec.kept += 1;
                        }
                    }
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
            added += rec.kept;
            calls.push(rec);
        }
        if !snippets.is_empty() {
            evidence.retrieval_confidence = snippets.iter().map(|s| s.score).sum::<f64>() / snippets.len() as f64;
        }
        if added == 0 && card.stop.no_new_evidence {
            stop = StopReason::NoNewEvidence;
            break;
        }
        if evidence.retrieval_confidence > card.stop.confidence_tau {
            stop = StopReason::Confident;
            break;
        }
    }
    PlanOutcome {
        answer: compose(query, context, &snippets, &card.analysis),
        hops_used,
        evidence,
        snippets,
        calls,
        stop,
    }
}

/// Template answer from entity-bearing sentences in the context and the
/// collected snippets; snippet sentences cite their snippet as `[n]`.
pub fn compose(query: &str, context: &[String], snippets: &[Snippet], analysis: &ComplexityLabel) -> String {
    let entity = query_entity(query);
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    let mut found: Vec<String> = Vec::new();
    for turn in context {
        for s in split_sentences(turn) {
            if mentions(&s, &entity) && seen.insert(tokenize(&s)) {
                found.push(s);
            }
        }
    }
    for (n, snip) in snippets.iter().enumerate() {
        for s in split_sentences(&snip.text) {
            if mentions(&s, &entity) && seen.insert(tokenize(&s)) {
                found.push(format!("{s} [{}]", n + 1));
            }
        }
    }
    found.truncate(4);
    let name = entity.join(" ");
    if analysis.te == Te::High {
        let owners = ["alice", "bruno", "chen", "dana"];
        let mut lines: Vec<String> = found
            .iter()
            .zip(owners)
            .map(|(s, o)| format!("- Follow up: {s} (owner: {o})"))
            .collect();
        lines.push("- Share the plan with the team @dana".to_string());
        return format!("Here are the action items I drafted for project {name}:\n{}", lines.join("\n"));
    }
    if found.is_empty() {
        return format!(
            "I checked the meeting record{} but found nothing about project {name}, so I cannot answer that reliably.",
            if snippets.is_empty() { "" } else { " and the retrieved sources" }
        );
    }
    let lead = if analysis.cd == Cd::CrossMeeting {
        "Here is what our earlier meetings recorded:"
    } else {
        "Here is what the meeting record and my sources show:"
    };
    format!("{lead} {}", found.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{Cl, Dk};

    fn label(te: Te) -> ComplexityLabel {
        ComplexityLabel::new(Cl::High, Cd::None, Dk::General, te)
    }

    fn kb_only(docs: Vec<Document>) -> Toolbox {
        Toolbox::new(docs, BTreeMap::new(), Vec::new(), HashedNgrams::default())
    }

    const Q: &str = "Hello Jiaojiao, what is the budget of project aurora 101?";

    #[test]
    fn entity_parsing() {
        assert_eq!(query_entity(Q), ["aurora", "101"]);
        assert_eq!(entity_key(&query_entity(Q)), ["101"]);
        assert_eq!(query_entity("where is the beef"), ["where", "beef"]);
        assert!(mentions("Project Aurora 101 is late.", &query_entity(Q)));
        assert!(!mentions("aurora 1010 is late", &query_entity(Q)));
    }

    #[test]
    fn card_expands_and_bounds_chain() {
        let c = PlanCard::new(label(Te::Low), &[ToolAction::KbRetrieval, ToolAction::Combo], 0.8).unwrap();
        assert_eq!(c.tool_chain, [ToolAction::KbRetrieval, ToolAction::CrossMeeting, ToolAction::Web]);
        assert!(c.render().contains("tools: knowledge base, past meetings, web;"));
        let mut bad = c.clone();
        bad.stop.max_hops = 4;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn confident_after_first_planning_hop() {
        let tools = kb_only(vec![
            Document::new("a", "We confirmed that the budget of project aurora 101 will be forty thousand."),
            Document::new("b", "Unrelated notes about hiring."),
        ]);
        let card = PlanCard::new(label(Te::Low), &[ToolAction::KbRetrieval], 0.8).unwrap();
        let out = plan_loop(Q, &[], &card, &tools, &mut |_| ToolAction::Web, EVIDENCE_BUDGET);
        assert_eq!(out.hops_used, 2);
        assert_eq!(out.stop, StopReason::Confident);
        assert_eq!(out.evidence.retrieval_confidence, 1.0);
        assert!(out.answer.contains("forty thousand. [1]"));
    }

    #[test]
    fn budget_caps_snippets() {
        let docs: Vec<Document> = (0..10)
            .map(|i| Document::new(format!("d{i}"), format!("Note {i}: project aurora 101 budget line {i}.")))
            .collect();
        let tools = kb_only(docs);
        let card = PlanCard::new(label(Te::Low), &[ToolAction::KbRetrieval], 0.8).unwrap();
        let out = plan_loop(Q, &[], &card, &tools, &mut |_| ToolAction::None, EVIDENCE_BUDGET);
        assert_eq!(out.snippets.len(), 6);
        assert!(out.hops_used <= MAX_HOPS);
    }

    #[test]
    fn nothing_found_stops_and_uses_context() {
        let tools = kb_only(vec![Document::new("a", "Unrelated notes about hiring.")]);
        let card = PlanCard::new(label(Te::Low), &[ToolAction::KbRetrieval, ToolAction::Web], 0.8).unwrap();
        let ctx = vec!["For project aurora 101 the budget is forty thousand, that is what we agreed.".to_string()];
        let out = plan_loop(Q, &ctx, &card, &tools, &mut |_| ToolAction::Combo, EVIDENCE_BUDGET);
        assert_eq!((out.hops_used, out.stop), (2, StopReason::NoNewEvidence));
        assert!(out.snippets.is_empty());
        assert!(out.answer.contains("forty thousand"));
        assert!(!out.answer.contains("[1]"));
    }

    #[test]
    fn tool_failures_are_recorded() {
        let tools = kb_only(Vec::new());
        let card = PlanCard::new(label(Te::Low), &[ToolAction::KbRetrieval, ToolAction::CrossMeeting], 0.8).unwrap();
        let out = plan_loop(Q, &[], &card, &tools, &mut |_| ToolAction::None, EVIDENCE_BUDGET);
        assert_eq!(out.calls.len(), 2);
        assert!(out.calls.iter().all(|c| c.error.is_some()));
    }

    #[test]
    fn te_answers_are_action_lists() {
        let a = compose(Q, &[], &[], &label(Te::High));
        assert!(a.lines().any(|l| l.starts_with("- ")) && a.contains("@dana"));
    }

    #[test]
    fn talker_uses_recent_window_only() {
        let mut ctx: Vec<String> = (0..8).map(|i| format!("filler {i}")).collect();
        ctx[0] = "For project aurora 101 the budget is forty thousand.".into();
        assert!(!talker_draft(Q, &ctx).contains("forty"));
        ctx[6] = ctx[0].clone();
        assert!(talker_draft(Q, &ctx).contains("forty"));
    }
}
