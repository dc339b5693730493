//! Byte-stable detector prompts. Line endings are always LF.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedExample, CorpusError, GenerationRecord};

/// Category summary embedded in every system prompt.
pub const GAP_CATEGORY_SUMMARY: &str = include_str!("../../assets/gap_categories.txt");

/// Closing instruction of every user prompt.
pub const OUTPUT_INSTRUCTION: &str = "Output a valid JSON object with the fields of {\"label\": [(one or more integers from 0-3 indicating the gap categories, expressed in a list)], \"explanation\": a short explanation justifying the label.}. Do not output anything else such as 'json' or newline characters or redundant spaces. Answer after output:\n\noutput:";

const PERSONA: &str = "You are a trained lawyer from Silicon Valley with a computer science background. Now, you are asked to annotate legal analysis generated by large language models and classify the errors and mismatch made by these models. To produce these legal analysis, a language model will receive the following prompt:";

const GENERATION_PROMPT: &str = "Here are some reference articles for legal cases:
# Reference case {case_key_1}
{text of cited case 1}
# Reference case {case_key_2}
{text of cited case 2}
...
# Reference case {case_key_N}
{text of cited case N}

Here is the text I've written so far:
# Paragraph
{previous_text}
Continue to write it following the style of my writeup. Your answer contains 100 to 400 words. You must explicitly use the reference cases and mention their reference ids, i.e. {case_key_1}, {case_key_2} ... {case_key_N}. Wrap your answer with <answer></answer>. Make your answer concise and avoid redundant languages.";

const TASK_INTRO: &str = "Receiving the prompt above, a language model will generate a paragraph of legal analysis, but often times they make different kinds of errors and mismatches.

The instructions for you to classify these errors and mismatches are as follows:

You should classify the LLM-generated legal analysis to these categories:";

const DEMO_INTRO: &str = "Here are some examples for demonstration:";

const DEMO_END: &str = "-----------------------------------------------------------------------------------------------

--End Demonstration--";

const CLOSING: &str = "Now, we will give you more instances and have you annotate 1, 2, 3, or 0. Output a json object containing the label and explanation for each example. If you label a 3, please elaborate the explanation for it a bit more.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
}

/// Python `repr` of a string, which is how citation lists are rendered.
fn py_str(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') {
        '"'
    } else {
        '\''
    };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

pub fn py_list(items: &[String]) -> String {
    let inner: Vec<String> = items.iter().map(|s| py_str(s)).collect();
    format!("[{}]", inner.join(", "))
}

fn normalize_newlines(s: &str) -> String {
    s.replace("\r\n", "\n").replace('\r', "\n")
}

/// Generation, citations, target, references and previous text, in that order.
fn render_record(out: &mut String, record: &GenerationRecord) {
    let _ = write!(
        out,
        "Generation:\n{}\n\ncitations needed to make: {}\n\nTarget:\n{}\n\n",
        normalize_newlines(&record.generation),
        py_list(&record.required_citations),
        normalize_newlines(&record.target),
    );
    for (i, r) in record.references.iter().enumerate() {
        let _ = write!(
            out,
            "reference_case_{}: {}\n{}\n\n",
            i + 1,
            r.cite_key,
            normalize_newlines(&r.text)
        );
    }
    let _ = write!(
        out,
        "previous_text:\n{}",
        normalize_newlines(&record.previous_text)
    );
}

pub fn build_user_prompt(record: &GenerationRecord) -> String {
    let mut out = String::new();
    render_record(&mut out, record);
    out.push_str("\n\n");
    out.push_str(OUTPUT_INSTRUCTION);
    out
}

/// System prompt with one demonstration block per example in `demos`.
///
/// Every demonstration needs its record text attached.
pub fn build_system_prompt(
    instruction_summary: &str,
    demos: &[AnnotatedExample],
) -> Result<String, CorpusError> {
    let mut out = String::new();
    for part in [PERSONA, GENERATION_PROMPT, TASK_INTRO] {
        out.push_str(part);
        out.push_str("\n\n");
    }
    out.push_str(normalize_newlines(instruction_summary).trim_end());
    out.push_str("\n\n");
    if !demos.is_empty() {
        out.push_str(DEMO_INTRO);
        out.push_str("\n\n");
        for (i, demo) in demos.iter().enumerate() {
            let record = demo
                .record
                .as_ref()
                .ok_or_else(|| CorpusError::RecordNotAttached(demo.record_id.clone()))?;
            let _ = writeln!(out, "Example annotation {}:", i + 1);
            render_record(&mut out, record);
            let _ = write!(
                out,
                "\n\nLabel: {}\n\nExplanation: {}\n\n",
                demo.gold,
                normalize_newlines(demo.explanation.trim())
            );
        }
        out.push_str(DEMO_END);
        out.push_str("\n\n");
    }
    out.push_str(CLOSING);
    Ok(out)
}

/// Number of demonstration blocks in a system prompt.
pub fn count_demonstrations(system_text: &str) -> usize {
    system_text
        .lines()
        .filter(|l| l.starts_with("Example annotation ") && l.ends_with(':'))
        .count()
}
