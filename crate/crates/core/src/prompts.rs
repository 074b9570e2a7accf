//! Prompt texts and interleaved text/image message bundles.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::instances::Instance;
use crate::parse::{parse_response, Status};
use crate::render::Image;
use crate::solver::Route;

/// Bumped whenever any template below changes wording.
pub const PROMPT_TEMPLATE_VERSION: u32 = 1;

pub const START_MARKER: &str = "<<start>>";
pub const END_MARKER: &str = "<<end>>";

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("instance must have at least 3 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("few-shot prompts need at least one demonstration")]
    NoDemos,
    #[error("demonstration {index} answer is not a valid {n}-node route: {detail}")]
    MalformedDemo {
        index: usize,
        n: usize,
        detail: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Part {
    Text(String),
    Image(Image),
}

impl Part {
    pub fn text(s: impl Into<String>) -> Self {
        Part::Text(s.into())
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Part::Text(t) => Some(t),
            Part::Image(_) => None,
        }
    }

    pub fn as_image(&self) -> Option<&Image> {
        match self {
            Part::Image(i) => Some(i),
            Part::Text(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleTag {
    ZeroShot,
    FewShotV1,
    FewShotV2,
    RefineInitText,
    RefineInitVisual,
    RefineFeedback,
}

impl BundleTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BundleTag::ZeroShot => "zero_shot",
            BundleTag::FewShotV1 => "few_shot_v1",
            BundleTag::FewShotV2 => "few_shot_v2",
            BundleTag::RefineInitText => "refine_init_text",
            BundleTag::RefineInitVisual => "refine_init_visual",
            BundleTag::RefineFeedback => "refine_feedback",
        }
    }
}

impl fmt::Display for BundleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub parts: Vec<Part>,
    pub tag: BundleTag,
    pub n: usize,
}

impl PromptBundle {
    pub fn images(&self) -> impl Iterator<Item = &Image> {
        self.parts.iter().filter_map(Part::as_image)
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.parts.iter().filter_map(Part::as_text)
    }

    pub fn image_count(&self) -> usize {
        self.images().count()
    }

    /// Human-readable transcript with images shown by digest.
    pub fn transcript(&self) -> String {
        let mut out = format!("# {} (n = {})\n", self.tag, self.n);
        for part in &self.parts {
            match part {
                Part::Text(t) => {
                    out.push_str(t);
                    out.push('\n');
                }
                Part::Image(img) => {
                    let _ = writeln!(out, "[image {} sha256:{}]", img.mime, img.sha256);
                }
            }
        }
        out
    }
}

/// Zero-shot task text.
pub fn zero_shot_text(n: usize) -> String {
    format!(
        "Inspect the above visualization of the TSP nodes and do the following:\n\
         -1- Return a trip sequence based on your visual inspection only. \
         The sequence should be enclosed within <<start>> and <<end>>markers.\n\
         -2- Make sure to return the Hamiltonian circuit that passes by all {n} points with IDs from 1 to {n}."
    )
}

/// Few-shot task text, shared by both few-shot variants.
pub fn few_shot_text(n: usize) -> String {
    format!(
        "This task requires a solution for exactly {n} points that has IDs from 1 to {n}. \
         Your output must precisely follow this node count and IDs.\n\
         -1- Strictly identify a Hamiltonian circuit for exactly {n} points. \
         Ensure the path visits each point once and returns to the starting point.\n\
         -2- Accurately sequence the circuit: List the IDs of these {n} points in the exact order they are visited, \
         starting and ending at the same point.\n\
         The sequence must contain only and exactly these {n} points, \
         formatted as: <<start>> 1 , 2 -> ... -> 1 <<end>>. Include no additional points or IDs."
    )
}

pub fn refine_initial_text(instance: &Instance) -> String {
    let n = instance.n;
    let mut text = format!(
        "The following are the coordinates of {n} TSP nodes, one per line as id: (x, y).\n"
    );
    for p in &instance.points {
        let _ = writeln!(text, "{}: ({}, {})", p.id, p.x, p.y);
    }
    let _ = write!(
        text,
        "Return a trip sequence for these nodes. \
         The sequence should be enclosed within <<start>> and <<end>> markers.\n\
         Make sure to return the Hamiltonian circuit that passes by all {n} points with IDs from 1 to {n}."
    );
    text
}

pub fn refine_feedback_text(n: usize) -> String {
    format!(
        "The above visualization shows the TSP nodes connected by the current trip.\n\
         -1- Inspect the drawn trip visually and return an improved trip sequence based on your visual inspection only, \
         for example by removing crossing edges or long detours. \
         The sequence should be enclosed within <<start>> and <<end>> markers.\n\
         -2- Make sure to return the Hamiltonian circuit that passes by all {n} points with IDs from 1 to {n}."
    )
}

/// `<<start>> a1 -> a2 -> ... -> an -> a1 <<end>>`
pub fn format_route_text(route: &Route) -> String {
    let ids = route.ids();
    let mut body: Vec<String> = ids.iter().map(u32::to_string).collect();
    if let Some(first) = ids.first() {
        body.push(first.to_string());
    }
    format!("{START_MARKER} {} {END_MARKER}", body.join(" -> "))
}

fn check_n(n: usize) -> Result<(), PromptError> {
    if n < 3 {
        Err(PromptError::TooFewNodes(n))
    } else {
        Ok(())
    }
}

pub fn build_zero_shot(points_image: Image, n: usize) -> Result<PromptBundle, PromptError> {
    check_n(n)?;
    Ok(PromptBundle {
        parts: vec![Part::Image(points_image), Part::Text(zero_shot_text(n))],
        tag: BundleTag::ZeroShot,
        n,
    })
}

/// One image demonstration: the instance rendering and its solved tour.
#[derive(Debug, Clone)]
pub struct ImageDemo {
    pub input: Image,
    pub solution: Image,
}

/// One text demonstration: the instance rendering and the formatted optimum.
#[derive(Debug, Clone)]
pub struct TextDemo {
    pub input: Image,
    pub route_text: String,
}

fn demo_header(k: usize, first: bool) -> String {
    if first {
        format!("Training Examples:\nExample {k} Input:")
    } else {
        format!("Example {k} Input:")
    }
}

pub fn build_few_shot_v1(
    demos: Vec<ImageDemo>,
    target_image: Image,
    n: usize,
) -> Result<PromptBundle, PromptError> {
    check_n(n)?;
    if demos.is_empty() {
        return Err(PromptError::NoDemos);
    }
    let mut parts = Vec::with_capacity(4 * demos.len() + 3);
    for (i, demo) in demos.into_iter().enumerate() {
        let k = i + 1;
        parts.push(Part::Text(demo_header(k, i == 0)));
        parts.push(Part::Image(demo.input));
        parts.push(Part::Text(format!("Example {k} output:")));
        parts.push(Part::Image(demo.solution));
    }
    parts.push(Part::text("The New Problem:"));
    parts.push(Part::Image(target_image));
    parts.push(Part::Text(few_shot_text(n)));
    Ok(PromptBundle {
        parts,
        tag: BundleTag::FewShotV1,
        n,
    })
}

pub fn build_few_shot_v2(
    demos: Vec<TextDemo>,
    target_image: Image,
    n: usize,
) -> Result<PromptBundle, PromptError> {
    check_n(n)?;
    if demos.is_empty() {
        return Err(PromptError::NoDemos);
    }
    let mut parts = Vec::with_capacity(4 * demos.len() + 3);
    for (i, demo) in demos.into_iter().enumerate() {
        let k = i + 1;
        let outcome = parse_response(&demo.route_text, n);
        if outcome.status != Status::Valid {
            return Err(PromptError::MalformedDemo {
                index: k,
                n,
                detail: outcome.detail,
            });
        }
        parts.push(Part::Text(demo_header(k, i == 0)));
        parts.push(Part::Image(demo.input));
        parts.push(Part::Text(format!("Example {k} output:")));
        parts.push(Part::Text(demo.route_text));
    }
    parts.push(Part::text("The New Problem:"));
    parts.push(Part::Image(target_image));
    parts.push(Part::Text(few_shot_text(n)));
    Ok(PromptBundle {
        parts,
        tag: BundleTag::FewShotV2,
        n,
    })
}

pub fn build_refine_initial_text(instance: &Instance) -> Result<PromptBundle, PromptError> {
    check_n(instance.n)?;
    Ok(PromptBundle {
        parts: vec![Part::Text(refine_initial_text(instance))],
        tag: BundleTag::RefineInitText,
        n: instance.n,
    })
}

/// Zero-shot bundle retagged as the visual initial step of the refine loop.
pub fn build_refine_initial_visual(
    points_image: Image,
    n: usize,
) -> Result<PromptBundle, PromptError> {
    let mut bundle = build_zero_shot(points_image, n)?;
    bundle.tag = BundleTag::RefineInitVisual;
    Ok(bundle)
}

pub fn build_refine_feedback(route_image: Image, n: usize) -> Result<PromptBundle, PromptError> {
    check_n(n)?;
    Ok(PromptBundle {
        parts: vec![Part::Image(route_image), Part::Text(refine_feedback_text(n))],
        tag: BundleTag::RefineFeedback,
        n,
    })
}
