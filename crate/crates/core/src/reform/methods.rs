//! Built-in reformulation method pipelines.
//!
//! Every pipeline consumes the prompt bank and the LLM gateway through
//! [`PipelineCtx`], records intermediate generations in the result metadata,
//! and returns expansions for the shared concatenation step (or, rarely, a
//! fully formed reformulation).

use std::collections::BTreeMap;

use super::parse::{parse_keywords, parse_lines, parse_listed_lines, split_blank_lines};
use super::{MethodOutput, MethodParams, MethodPipeline, PipelineCtx, PipelineError};
use crate::data::QueryItem;
use crate::reform::MetaValue;
use crate::retrieval::tokenize;

fn query_vars(query: &QueryItem) -> BTreeMap<String, String> {
    BTreeMap::from([("query".to_owned(), query.text.clone())])
}

/// Rank-ordered passage block for context prompts: `[i] text` lines, or an
/// explicit marker when retrieval came back empty.
fn passages_block(passages: &[String]) -> String {
    if passages.is_empty() {
        return "(no passages retrieved)".to_owned();
    }
    passages
        .iter()
        .enumerate()
        .map(|(i, passage)| format!("[{}] {}", i + 1, passage))
        .collect::<Vec<_>>()
        .join("\n")
}

/// One call, one pseudo-document; expansion is the generated passage.
pub(super) struct Query2Doc;

impl MethodPipeline for Query2Doc {
    fn template_ids(&self, _params: &MethodParams) -> Vec<String> {
        vec!["query2doc.passage_gen".into()]
    }

    fn run(
        &self,
        query: &QueryItem,
        ctx: &mut PipelineCtx<'_>,
    ) -> Result<MethodOutput, PipelineError> {
        let completion = ctx.generate("query2doc.passage_gen", &query_vars(query))?;
        Ok(MethodOutput::Expansions(vec![completion.choices[0].clone()]))
    }
}

/// One call, keyword-list response.
pub(super) struct GenQr;

impl MethodPipeline for GenQr {
    fn template_ids(&self, _params: &MethodParams) -> Vec<String> {
        vec!["genqr.keywords".into()]
    }

    fn run(
        &self,
        query: &QueryItem,
        ctx: &mut PipelineCtx<'_>,
    ) -> Result<MethodOutput, PipelineError> {
        let completion = ctx.generate("genqr.keywords", &query_vars(query))?;
        Ok(MethodOutput::Expansions(parse_keywords(
            &completion.choices[0],
        )))
    }
}

fn ensemble_template_id(variant: usize) -> String {
    format!("genqr_ensemble.v{variant:02}")
}

/// One call per paraphrased instruction variant; keyword lists concatenated
/// in variant order. A failing variant is noted and skipped.
pub(super) struct GenQrEnsemble;

impl MethodPipeline for GenQrEnsemble {
    fn template_ids(&self, params: &MethodParams) -> Vec<String> {
        (1..=params.n_instructions).map(ensemble_template_id).collect()
    }

    fn run(
        &self,
        query: &QueryItem,
        ctx: &mut PipelineCtx<'_>,
    ) -> Result<MethodOutput, PipelineError> {
        let vars = query_vars(query);
        let mut expansions = Vec::new();
        for variant in 1..=ctx.params().n_instructions {
            let id = ensemble_template_id(variant);
            match ctx.generate(&id, &vars) {
                Ok(completion) => expansions.extend(parse_keywords(&completion.choices[0])),
                Err(err) => ctx.note_error(&id, &err),
            }
        }
        Ok(MethodOutput::Expansions(expansions))
    }
}

/// One call asking for related entities and terms, parsed like genqr.
pub(super) struct Query2E;

impl MethodPipeline for Query2E {
    fn template_ids(&self, _params: &MethodParams) -> Vec<String> {
        vec!["query2e.expand".into()]
    }

    fn run(
        &self,
        query: &QueryItem,
        ctx: &mut PipelineCtx<'_>,
    ) -> Result<MethodOutput, PipelineError> {
        let completion = ctx.generate("query2e.expand", &query_vars(query))?;
        Ok(MethodOutput::Expansions(parse_keywords(
            &completion.choices[0],
        )))
    }
}

/// Question decomposition, then one answer call per parsed question.
pub(super) struct QaExpand;

impl MethodPipeline for QaExpand {
    fn template_ids(&self, _params: &MethodParams) -> Vec<String> {
        vec!["qa_expand.questions".into(), "qa_expand.answer".into()]
    }

    fn run(
        &self,
        query: &QueryItem,
        ctx: &mut PipelineCtx<'_>,
    ) -> Result<MethodOutput, PipelineError> {
        let num_questions = ctx.params().num_questions;
        let mut vars = query_vars(query);
        vars.insert("num_questions".to_owned(), num_questions.to_string());
        let completion = ctx.generate("qa_expand.questions", &vars)?;
        let questions = parse_listed_lines(&completion.choices[0], num_questions);
        if questions.is_empty() {
            return Ok(MethodOutput::Expansions(Vec::new()));
        }
        ctx.set_extra("questions", MetaValue::List(questions.clone()));

        let mut answers = Vec::new();
        for question in &questions {
            let mut vars = query_vars(query);
            vars.insert("question".to_owned(), question.clone());
            match ctx.generate("qa_expand.answer", &vars) {
                Ok(completion) => answers.push(completion.choices[0].clone()),
                Err(err) => ctx.note_error("qa_expand.answer", &err),
            }
        }
        Ok(MethodOutput::Expansions(answers))
    }
}

/// Multi-document generation with an adaptive repeat weight
/// `w = max(1, round(lambda * expansion_tokens / query_tokens))`.
pub(super) struct MuGi;

impl MethodPipeline for MuGi {
    fn template_ids(&self, _params: &MethodParams) -> Vec<String> {
        vec!["mugi.passage_gen".into()]
    }

    fn run(
        &self,
        query: &QueryItem,
        ctx: &mut PipelineCtx<'_>,
    ) -> Result<MethodOutput, PipelineError> {
        let num_docs = ctx.params().num_docs;
        let vars = query_vars(query);

        // One call with n = num_docs; top up sequentially if the backend
        // returns fewer choices, never exceeding num_docs calls in total.
        let completion = ctx.generate_with_n("mugi.passage_gen", &vars, num_docs as u32)?;
        let mut docs: Vec<String> = completion
            .choices
            .iter()
            .map(|choice| choice.trim().to_owned())
            .filter(|choice| !choice.is_empty())
            .collect();
        let mut calls = 1;
        while docs.len() < num_docs && calls < num_docs {
            calls += 1;
            match ctx.generate_with_n("mugi.passage_gen", &vars, 1) {
                Ok(completion) => {
                    let text = completion.choices[0].trim();
                    if !text.is_empty() {
                        docs.push(text.to_owned());
                    }
                }
                Err(err) => {
                    ctx.note_error("mugi.passage_gen", &err);
                    break;
                }
            }
        }
        docs.truncate(num_docs);

        let query_tokens = tokenize(&query.text).len();
        let expansion_tokens: usize = docs.iter().map(|doc| tokenize(doc).len()).sum();
        let weight = if query_tokens == 0 {
            1
        } else {
            let ratio =
                ctx.params().mugi_lambda * expansion_tokens as f64 / query_tokens as f64;
            (ratio.round() as i64).max(1) as usize
        };
        ctx.set_extra("adaptive_query_weight", MetaValue::Int(weight as i64));
        Ok(MethodOutput::ExpansionsWeighted {
            expansions: docs,
            query_weight: weight,
        })
    }
}

/// Retrieval-context answer generation.
pub(super) struct LameR;

impl MethodPipeline for LameR {
    fn template_ids(&self, _params: &MethodParams) -> Vec<String> {
        vec!["lamer.answer_gen".into()]
    }

    fn run(
        &self,
        query: &QueryItem,
        ctx: &mut PipelineCtx<'_>,
    ) -> Result<MethodOutput, PipelineError> {
        let passages = ctx.retrieve_passages(&query.text)?;
        let mut vars = query_vars(query);
        vars.insert("passages".to_owned(), passages_block(&passages));
        vars.insert(
            "num_answers".to_owned(),
            ctx.params().num_answers.to_string(),
        );
        let completion = ctx.generate("lamer.answer_gen", &vars)?;
        Ok(MethodOutput::Expansions(split_blank_lines(
            &completion.choices[0],
        )))
    }
}

/// Corpus-steered expansion: sentence extraction from retrieved passages,
/// then self-generated knowledge passages. The two sub-steps are isolated;
/// either alone is enough to succeed.
pub(super) struct Csqe;

impl MethodPipeline for Csqe {
    fn template_ids(&self, _params: &MethodParams) -> Vec<String> {
        vec!["csqe.extract".into(), "csqe.generate".into()]
    }

    fn run(
        &self,
        query: &QueryItem,
        ctx: &mut PipelineCtx<'_>,
    ) -> Result<MethodOutput, PipelineError> {
        let passages = ctx.retrieve_passages(&query.text)?;
        let mut expansions = Vec::new();

        let mut extract_vars = query_vars(query);
        extract_vars.insert("passages".to_owned(), passages_block(&passages));
        match ctx.generate("csqe.extract", &extract_vars) {
            Ok(completion) => expansions.extend(parse_lines(&completion.choices[0])),
            Err(err) => ctx.note_error("csqe.extract", &err),
        }

        let mut generate_vars = query_vars(query);
        generate_vars.insert(
            "gen_passages".to_owned(),
            ctx.params().gen_passages.to_string(),
        );
        match ctx.generate("csqe.generate", &generate_vars) {
            Ok(completion) => expansions.extend(split_blank_lines(&completion.choices[0])),
            Err(err) => ctx.note_error("csqe.generate", &err),
        }

        Ok(MethodOutput::Expansions(expansions))
    }
}
