//! Deterministic text artifacts: graph exports (node-link and DOT), the
//! settlement audit log, and the scenario report.
//!
//! Every export is sorted and field-ordered so identical states produce
//! byte-identical files on any platform.

use crate::amount::weight_to_string;
use crate::engine::Engine;
use crate::errors::{Error, Result};
use crate::graph::ManuscriptNode;

/// Escape a free-text field into one quoted token.
fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

fn node_lines(node: &ManuscriptNode, out: &mut Vec<String>) {
    out.push(format!(
        "node id={} key={} state={} version={} tick={} content={} merkle={} stake={} genesis={}",
        node.id,
        node.key,
        node.state.render(),
        node.meta.version,
        node.meta.timestamp,
        node.meta.content_digest,
        node.meta.citation_merkle_root,
        node.authorship.author_stake,
        node.is_genesis as u8,
    ));
    for (addr, share) in &node.authorship.authors {
        out.push(format!(
            "author node={} addr={} share={}",
            node.id,
            addr,
            weight_to_string(share)
        ));
    }
    for record in &node.confirmations.records {
        out.push(format!(
            "review node={} reviewer={} verdict={} version={} stake={} contract={} report={}",
            node.id,
            record.reviewer,
            record.verdict.render(),
            record.version_signed,
            record.stake,
            record.review_contract.0,
            quote(&record.report),
        ));
    }
    for remark in &node.remarks {
        out.push(format!(
            "remark node={} agent={} kind={} stake={} contract={} terms={}",
            node.id,
            remark.agent,
            remark.kind.render(),
            remark.stake,
            remark.contract.0,
            remark.terms_digest,
        ));
    }
}

/// Node-link export: full component data, nodes sorted by current hash,
/// then every citation edge (citing -> cited) sorted.
pub fn graph_nodelink(engine: &Engine) -> Vec<String> {
    let graph = engine.graph();
    let mut nodes: Vec<&ManuscriptNode> = graph.iter().collect();
    nodes.sort_by_key(|n| n.id);
    let mut out = Vec::new();
    out.push(format!("graph/v1 nodes={}", nodes.len()));
    for node in &nodes {
        node_lines(node, &mut out);
    }
    let mut edges = Vec::new();
    for node in &nodes {
        for cited in &node.citations {
            edges.push(format!("edge from={} to={}", node.id, cited));
        }
    }
    edges.sort();
    out.extend(edges);
    out
}

/// DOT export for visualization tools; same ordering as the node-link form.
pub fn graph_dot(engine: &Engine) -> Vec<String> {
    let graph = engine.graph();
    let mut nodes: Vec<&ManuscriptNode> = graph.iter().collect();
    nodes.sort_by_key(|n| n.id);
    let mut out = Vec::new();
    out.push("digraph publication_graph {".to_string());
    for node in &nodes {
        out.push(format!(
            "  \"{}\" [label=\"{} v{} {}\"];",
            node.id,
            node.id.0.short(),
            node.meta.version,
            node.state.render()
        ));
    }
    let mut edges = Vec::new();
    for node in &nodes {
        for cited in &node.citations {
            edges.push(format!("  \"{}\" -> \"{}\";", node.id, cited));
        }
    }
    edges.sort();
    out.extend(edges);
    out.push("}".to_string());
    out
}

/// Settlement audit log: one settlement block per report in emission
/// order; beneficiary lines sorted by address.
pub fn audit_log(engine: &Engine) -> Vec<String> {
    let mut out = Vec::new();
    for (i, report) in engine.audit().iter().enumerate() {
        out.push(format!(
            "settlement index={} manuscript={} kind={} pool={}",
            i,
            report.manuscript,
            report.kind.render(),
            report.pool
        ));
        for (cited, amount) in &report.per_citation {
            out.push(format!(
                "cite index={} cited={} amount={}",
                i, cited, amount
            ));
        }
        let mut lines = report.per_beneficiary.clone();
        lines.sort_by_key(|l| (l.to, l.class));
        for line in lines {
            out.push(format!(
                "pay index={} to={} amount={} class={}",
                i,
                line.to,
                line.amount,
                line.class.render()
            ));
        }
    }
    out
}

/// Full component printout of one node, plus its citation edges.
pub fn describe_node(
    engine: &Engine,
    id: &crate::graph::ManuscriptId,
) -> Result<Vec<String>> {
    let node = engine.graph().get(id)?;
    let mut out = Vec::new();
    node_lines(node, &mut out);
    for cited in &node.citations {
        out.push(format!("edge from={} to={}", node.id, cited));
    }
    for citer in engine.graph().citers_of(&node.key) {
        if let Ok(citing) = engine.graph().get(&citer) {
            out.push(format!("cited-by node={} citer={}", node.id, citing.id));
        }
    }
    Ok(out)
}

pub fn render_export(engine: &Engine, format: &str) -> Result<String> {
    let lines = match format {
        "nodelink" => graph_nodelink(engine),
        "dot" => graph_dot(engine),
        "ledger" => engine.ledger().export_lines(),
        "audit" => audit_log(engine),
        other => return Err(Error::UnknownFormat(other.to_string())),
    };
    let mut text = lines.join("\n");
    text.push('\n');
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyConfig;

    #[test]
    fn genesis_only_exports() {
        let engine = Engine::new(1, PolicyConfig::default()).unwrap();
        let nodelink = graph_nodelink(&engine);
        assert_eq!(nodelink[0], "graph/v1 nodes=1");
        assert!(nodelink.iter().all(|l| !l.starts_with("edge")));
        let dot = graph_dot(&engine);
        assert_eq!(dot.first().unwrap(), "digraph publication_graph {");
        assert_eq!(dot.last().unwrap(), "}");
    }

    #[test]
    fn unknown_format_rejected() {
        let engine = Engine::new(1, PolicyConfig::default()).unwrap();
        assert!(matches!(
            render_export(&engine, "xml"),
            Err(Error::UnknownFormat(_))
        ));
    }

    #[test]
    fn quoting_escapes_control_characters() {
        assert_eq!(quote("a\"b\\c\nd"), "\"a\\\"b\\\\c\\nd\"");
    }
}
