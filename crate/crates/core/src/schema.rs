//! The GZD-5 volunteer decision tree and its flat answer-slot layout.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of answer slots in the GZD-5 tree (the width of the network head).
pub const GZD5_TOTAL_ANSWERS: usize = 34;
pub const GZD5_QUESTIONS: usize = 10;

/// The answer(s) of a parent question that route a volunteer to a child question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParentEdge {
    pub question: String,
    /// Full answer ids of `question` that trigger the child.
    pub answers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    /// Full answer ids (`<question>_<answer>`) in slot order.
    pub answer_slots: Vec<String>,
    pub parent: Option<ParentEdge>,
    pub display_text: String,
}

impl Question {
    pub fn num_options(&self) -> usize {
        self.answer_slots.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyQuestion(String),
    DuplicateId(String),
    NoRoot,
    MultipleRoots(Vec<String>),
    UnknownParent { question: String, parent: String },
    UnknownTriggerAnswer { question: String, answer: String },
    Cycle(String),
    SlotIndex(String),
    TotalMismatch { declared: usize, counted: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyQuestion(q) => write!(f, "question {q} has no answer slots"),
            Violation::DuplicateId(id) => write!(f, "duplicate id {id}"),
            Violation::NoRoot => write!(f, "no root question"),
            Violation::MultipleRoots(r) => write!(f, "multiple roots: {}", r.join(", ")),
            Violation::UnknownParent { question, parent } => {
                write!(f, "question {question} names unknown parent {parent}")
            }
            Violation::UnknownTriggerAnswer { question, answer } => {
                write!(f, "question {question} is triggered by unknown answer {answer}")
            }
            Violation::Cycle(q) => write!(f, "dependency cycle through {q}"),
            Violation::SlotIndex(m) => write!(f, "slot index is not a bijection: {m}"),
            Violation::TotalMismatch { declared, counted } => {
                write!(f, "total_answers {declared} != {counted} counted slots")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionTreeSchema {
    questions: Vec<Question>,
    total_answers: usize,
    slot_index: BTreeMap<String, usize>,
    ranges: Vec<Range<usize>>,
}

impl DecisionTreeSchema {
    /// Build a schema, deriving the slot layout from question order. Fails if
    /// the result does not validate.
    pub fn new(questions: Vec<Question>) -> Result<Self> {
        let mut slot_index = BTreeMap::new();
        let mut next = 0;
        for q in &questions {
            for a in &q.answer_slots {
                slot_index.entry(a.clone()).or_insert(next);
                next += 1;
            }
        }
        let schema = Self::from_parts(questions, next, slot_index);
        let violations = validate_schema(&schema);
        if !violations.is_empty() {
            let msg: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return Err(Error::InvalidArgument(format!(
                "invalid decision tree: {}",
                msg.join("; ")
            )));
        }
        Ok(schema)
    }

    /// Assemble a schema without checking it. Use [`validate_schema`] afterwards.
    pub fn from_parts(questions: Vec<Question>, total_answers: usize, slot_index: BTreeMap<String, usize>) -> Self {
        let mut ranges = Vec::with_capacity(questions.len());
        let mut start = 0;
        for q in &questions {
            ranges.push(start..start + q.answer_slots.len());
            start += q.answer_slots.len();
        }
        Self {
            questions,
            total_answers,
            slot_index,
            ranges,
        }
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn num_questions(&self) -> usize {
        self.questions.len()
    }

    pub fn total_answers(&self) -> usize {
        self.total_answers
    }

    pub fn slot_index(&self) -> &BTreeMap<String, usize> {
        &self.slot_index
    }

    pub fn slot(&self, answer_id: &str) -> Option<usize> {
        self.slot_index.get(answer_id).copied()
    }

    /// Flat slot range of question `q`.
    pub fn range(&self, q: usize) -> Range<usize> {
        self.ranges[q].clone()
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn question_index(&self, id: &str) -> Option<usize> {
        self.questions.iter().position(|q| q.id == id)
    }

    pub fn root(&self) -> usize {
        self.questions
            .iter()
            .position(|q| q.parent.is_none())
            .expect("validated schema has a root")
    }

    /// Children of question `q` in schema order.
    pub fn children(&self, q: usize) -> Vec<usize> {
        let id = &self.questions[q].id;
        self.questions
            .iter()
            .enumerate()
            .filter(|(_, c)| c.parent.as_ref().is_some_and(|p| &p.question == id))
            .map(|(i, _)| i)
            .collect()
    }

    /// Answer ids in flat slot order.
    pub fn answer_ids(&self) -> impl Iterator<Item = &str> {
        self.questions
            .iter()
            .flat_map(|q| q.answer_slots.iter().map(String::as_str))
    }
}

/// Structural checks: unique ids, single root, acyclic parent links, and a
/// slot index that is a bijection onto `0..total_answers`.
pub fn validate_schema(schema: &DecisionTreeSchema) -> Vec<Violation> {
    let mut out = Vec::new();
    let questions = schema.questions();

    let mut seen = BTreeSet::new();
    for q in questions {
        if q.answer_slots.is_empty() {
            out.push(Violation::EmptyQuestion(q.id.clone()));
        }
        if !seen.insert(q.id.as_str()) {
            out.push(Violation::DuplicateId(q.id.clone()));
        }
        for a in &q.answer_slots {
            if !seen.insert(a.as_str()) {
                out.push(Violation::DuplicateId(a.clone()));
            }
        }
    }

    let roots: Vec<String> = questions
        .iter()
        .filter(|q| q.parent.is_none())
        .map(|q| q.id.clone())
        .collect();
    match roots.len() {
        0 => out.push(Violation::NoRoot),
        1 => {}
        _ => out.push(Violation::MultipleRoots(roots)),
    }

    let by_id: BTreeMap<&str, &Question> = questions.iter().map(|q| (q.id.as_str(), q)).collect();
    for q in questions {
        if let Some(p) = &q.parent {
            match by_id.get(p.question.as_str()) {
                None => out.push(Violation::UnknownParent {
                    question: q.id.clone(),
                    parent: p.question.clone(),
                }),
                Some(parent) => {
                    for a in &p.answers {
                        if !parent.answer_slots.contains(a) {
                            out.push(Violation::UnknownTriggerAnswer {
                                question: q.id.clone(),
                                answer: a.clone(),
                            });
                        }
                    }
                }
            }
        }
    }

    // Walk parent links; a walk longer than the question count means a cycle.
    for q in questions {
        let mut cur = q;
        let mut steps = 0;
        while let Some(p) = &cur.parent {
            steps += 1;
            if p.question == q.id || steps > questions.len() {
                out.push(Violation::Cycle(q.id.clone()));
                break;
            }
            match by_id.get(p.question.as_str()) {
                Some(next) => cur = next,
                None => break,
            }
        }
    }

    let counted: usize = questions.iter().map(|q| q.answer_slots.len()).sum();
    if counted != schema.total_answers() {
        out.push(Violation::TotalMismatch {
            declared: schema.total_answers(),
            counted,
        });
    }
    let index = schema.slot_index();
    let mut hit = vec![false; schema.total_answers()];
    for (pos, a) in schema.answer_ids().enumerate() {
        match index.get(a) {
            None => out.push(Violation::SlotIndex(format!("answer {a} is unmapped"))),
            Some(&s) if s != pos => out.push(Violation::SlotIndex(format!(
                "answer {a} mapped to {s}, expected {pos}"
            ))),
            Some(&s) => {
                if let Some(h) = hit.get_mut(s) {
                    *h = true;
                }
            }
        }
    }
    if index.len() != counted {
        out.push(Violation::SlotIndex(format!(
            "{} mapped entries for {counted} slots",
            index.len()
        )));
    }
    if let Some(missing) = hit.iter().position(|h| !h) {
        out.push(Violation::SlotIndex(format!("slot {missing} is not covered")));
    }
    out
}

fn question(id: &str, answers: &[&str], parent: Option<(&str, &[&str])>, text: &str) -> Question {
    let full = |q: &str, a: &str| format!("{q}_{a}");
    Question {
        id: id.to_string(),
        answer_slots: answers.iter().map(|a| full(id, a)).collect(),
        parent: parent.map(|(p, trig)| ParentEdge {
            question: p.to_string(),
            answers: trig.iter().map(|a| full(p, a)).collect(),
        }),
        display_text: text.to_string(),
    }
}

/// The ten-question GZD-5 tree with 34 answer slots.
///
/// Merging is asked after either non-artifact root answer, so its parent edge
/// lists both triggering answers.
pub fn build_gzd5_schema() -> DecisionTreeSchema {
    let questions = vec![
        question(
            "smooth-or-featured",
            &["smooth", "featured-or-disk", "artifact"],
            None,
            "Is the galaxy simply smooth and rounded, with no sign of a disk?",
        ),
        question(
            "disk-edge-on",
            &["yes", "no"],
            Some(("smooth-or-featured", &["featured-or-disk"])),
            "Could this be a disk viewed edge-on?",
        ),
        question(
            "has-spiral-arms",
            &["yes", "no"],
            Some(("disk-edge-on", &["no"])),
            "Is there any sign of a spiral arm pattern?",
        ),
        question(
            "bar",
            &["strong", "weak", "no"],
            Some(("disk-edge-on", &["no"])),
            "Is there a bar feature through the centre of the galaxy?",
        ),
        question(
            "bulge-size",
            &["dominant", "large", "moderate", "small", "none"],
            Some(("disk-edge-on", &["no"])),
            "How prominent is the central bulge, compared with the rest of the galaxy?",
        ),
        question(
            "how-rounded",
            &["round", "in-between", "cigar-shaped"],
            Some(("smooth-or-featured", &["smooth"])),
            "How rounded is it?",
        ),
        question(
            "edge-on-bulge",
            &["boxy", "none", "rounded"],
            Some(("disk-edge-on", &["yes"])),
            "Does the galaxy have a bulge at its centre? If so, what shape?",
        ),
        question(
            "spiral-winding",
            &["tight", "medium", "loose"],
            Some(("has-spiral-arms", &["yes"])),
            "How tightly wound do the spiral arms appear?",
        ),
        question(
            "spiral-arm-count",
            &["1", "2", "3", "4", "more-than-4", "cant-tell"],
            Some(("has-spiral-arms", &["yes"])),
            "How many spiral arms are there?",
        ),
        question(
            "merging",
            &["none", "minor-disturbance", "major-disturbance", "merger"],
            Some(("smooth-or-featured", &["smooth", "featured-or-disk"])),
            "Is the galaxy currently merging or is there any sign of tidal debris?",
        ),
    ];
    let schema = DecisionTreeSchema::new(questions).expect("built-in GZD-5 tree is valid");
    assert_eq!(schema.num_questions(), GZD5_QUESTIONS);
    assert_eq!(schema.total_answers(), GZD5_TOTAL_ANSWERS, "GZD-5 slot transcription");
    schema
}
