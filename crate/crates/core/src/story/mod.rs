//! Story prompt composition, text-generation calls, and the offline
//! fallback narrative.

mod client;

pub use self::client::{
    HttpTextGenerator, LlmBackend, RetryPolicy, TextGenClientConfig, TextGenError, TextGenerator,
};

use serde::Serialize;

use crate::taxonomy::{aspect_of, Aspect, CaptionCategory, KeywordCaption};
use crate::tree::KeywordBundle;

pub const PROMPT_PREFIX: &str =
    "Please create a concise sentence that encapsulates these keywords:";
const PROMPT_MIDDLE: &str = ". Additionally, provide a brief explanation in under 30 words, about ";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum StoryError {
    #[error("no keywords to compose a prompt from")]
    EmptyKeywords,
    #[error("at least one aspect must be selected")]
    NoAspects,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StorySource {
    Llm,
    Fallback,
}

#[derive(Debug, Clone)]
pub struct StoryRequest {
    pub bundle: KeywordBundle,
    aspects: Vec<Aspect>,
}

impl StoryRequest {
    pub fn new(bundle: KeywordBundle, aspects: &[Aspect]) -> Result<Self, StoryError> {
        let mut aspects = aspects.to_vec();
        aspects.sort();
        aspects.dedup();
        if aspects.is_empty() {
            return Err(StoryError::NoAspects);
        }
        Ok(StoryRequest { bundle, aspects })
    }

    pub fn all_aspects(bundle: KeywordBundle) -> Self {
        StoryRequest {
            bundle,
            aspects: Aspect::ALL.to_vec(),
        }
    }

    pub fn aspects(&self) -> &[Aspect] {
        &self.aspects
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Story {
    pub keywords: Vec<String>,
    pub prompt: String,
    pub narrative: String,
    pub source: StorySource,
}

/// Captions whose category answers a selected aspect, in bundle order.
pub fn select_captions<'a>(
    bundle: &'a KeywordBundle,
    aspects: &[Aspect],
) -> Vec<&'a KeywordCaption> {
    bundle
        .all()
        .filter(|k| aspects.contains(&aspect_of(k.category)))
        .collect()
}

pub fn select_keywords(bundle: &KeywordBundle, aspects: &[Aspect]) -> Vec<String> {
    select_captions(bundle, aspects)
        .into_iter()
        .map(|k| k.label.clone())
        .collect()
}

/// The story prompt: keywords joined by ", ", one question clause per
/// selected aspect joined by "; ".
pub fn compose_prompt(keywords: &[String], aspects: &[Aspect]) -> Result<String, StoryError> {
    if keywords.is_empty() {
        return Err(StoryError::EmptyKeywords);
    }
    let mut ordered = aspects.to_vec();
    ordered.sort();
    ordered.dedup();
    let questions: Vec<&str> = ordered.iter().map(|a| a.question()).collect();
    Ok(format!(
        "{PROMPT_PREFIX}{}{PROMPT_MIDDLE}{}",
        keywords.join(", "),
        questions.join("; ")
    ))
}

fn title_case(place: &str) -> String {
    let mut out = String::with_capacity(place.len());
    let mut boundary = true;
    for c in place.chars() {
        if boundary {
            out.extend(c.to_uppercase());
        } else {
            out.push(c);
        }
        boundary = c == ' ' || c == '-';
    }
    out
}

fn with_article(place: &str) -> String {
    let needs_the = place == "world"
        || place.starts_with("united ")
        || place.ends_with(" islands")
        || place.ends_with(" republic")
        || matches!(
            place,
            "netherlands" | "americas" | "arctic" | "antarctic" | "pacific" | "atlantic"
        );
    if needs_the {
        format!("the {}", title_case(place))
    } else {
        title_case(place)
    }
}

/// `This {map type}[ of {places}][ from the {century}][ is {style}][ and is about {topic}].`
/// Clauses whose keywords were not selected are left out.
pub fn fallback_narrative(bundle: &KeywordBundle, selected: &[&KeywordCaption]) -> String {
    let mut out = format!("This {}", bundle.map_type.label);
    let pick = |f: fn(CaptionCategory) -> bool| -> Vec<&str> {
        selected
            .iter()
            .filter(|k| f(k.category))
            .map(|k| k.label.as_str())
            .collect()
    };
    let places: Vec<String> = pick(|c| aspect_of(c) == Aspect::Where)
        .into_iter()
        .map(with_article)
        .collect();
    let when = pick(|c| c == CaptionCategory::Century);
    let style = pick(|c| c == CaptionCategory::Style);
    let topic = pick(|c| c == CaptionCategory::Topic);
    if !places.is_empty() {
        out.push_str(" of ");
        out.push_str(&places.join(" and "));
    }
    if let Some(century) = when.first() {
        out.push_str(" from the ");
        out.push_str(century);
    }
    let mut predicates = Vec::new();
    if !style.is_empty() {
        predicates.push(format!("is {}", style.join(" and ")));
    }
    if !topic.is_empty() {
        predicates.push(format!("is about {}", topic.join(" and ")));
    }
    if !predicates.is_empty() {
        out.push(' ');
        out.push_str(&predicates.join(" and "));
    }
    out.push('.');
    out
}

/// Never fails: any text-generation problem degrades to the fallback
/// narrative, which is recorded in `source`.
pub fn generate_story(request: &StoryRequest, llm: Option<&LlmBackend>) -> Story {
    let selected = select_captions(&request.bundle, request.aspects());
    let keywords: Vec<String> = selected.iter().map(|k| k.label.clone()).collect();
    let fallback = |prompt: String| Story {
        keywords: keywords.clone(),
        narrative: fallback_narrative(&request.bundle, &selected),
        prompt,
        source: StorySource::Fallback,
    };
    let prompt = match compose_prompt(&keywords, request.aspects()) {
        Ok(p) => p,
        Err(e) => {
            log::info!("story: {e}; using fallback narrative");
            return fallback(String::new());
        }
    };
    let Some(llm) = llm else {
        return fallback(prompt);
    };
    match llm.generate(&prompt) {
        Ok(text) if !text.trim().is_empty() => Story {
            keywords,
            prompt,
            narrative: text.trim().to_string(),
            source: StorySource::Llm,
        },
        Ok(_) => {
            log::warn!("story: text generation returned an empty narrative; using fallback");
            fallback(prompt)
        }
        Err(e) => {
            log::warn!("story: text generation failed ({e}); using fallback");
            fallback(prompt)
        }
    }
}
