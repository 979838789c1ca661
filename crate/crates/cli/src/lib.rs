//! The `linkforge` command line.

mod annotation;
mod corpus_cmds;
mod io;
mod linking;

use clap::{Parser, Subcommand, ValueEnum};

use linkforge_core::Domain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DomainArg {
    Reviews,
    News,
}

impl From<DomainArg> for Domain {
    fn from(d: DomainArg) -> Self {
        match d {
            DomainArg::Reviews => Domain::Reviews,
            DomainArg::News => Domain::News,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "linkforge", version, about = "Cross-document sentence linking toolkit")]
pub struct Cli {
    /// Log filter, e.g. `info` or `linkforge_core=debug`.
    #[arg(long, global = true, env = "LINKFORGE_LOG", default_value = "warn")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a corpus into the dataset format.
    Ingest(corpus_cmds::IngestArgs),
    /// Print dataset statistics.
    Stats(corpus_cmds::StatsArgs),
    /// Generate linked pairs from natural documents with a chat model.
    Synth(corpus_cmds::SynthArgs),
    /// Strip boilerplate from raw articles with a chat model.
    Clean(corpus_cmds::CleanArgs),
    /// Type-token ratio, reading ease and subjectivity per document.
    Style(corpus_cmds::StyleArgs),
    /// Rank target sentences for every source sentence.
    Retrieve(linking::RetrieveArgs),
    /// Filter retrieved candidates with a chat model.
    Refine(linking::RefineArgs),
    /// Score predictions against gold links.
    Evaluate(linking::EvaluateArgs),
    /// Build candidate bundles for annotation.
    Assemble(annotation::AssembleArgs),
    /// Agreement and acceptance statistics over annotator decisions.
    Agree(annotation::AgreeArgs),
    /// Run the annotation service.
    Serve(annotation::ServeArgs),
    /// Export annotations from a decision log without a running service.
    Export(annotation::ExportArgs),
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    env_logger::Builder::new().parse_filters(&cli.log).format_timestamp(None).try_init().ok();
    match &cli.command {
        Command::Ingest(a) => corpus_cmds::ingest(a),
        Command::Stats(a) => corpus_cmds::stats(a),
        Command::Synth(a) => corpus_cmds::synth(a),
        Command::Clean(a) => corpus_cmds::clean(a),
        Command::Style(a) => corpus_cmds::style(a),
        Command::Retrieve(a) => linking::retrieve(a),
        Command::Refine(a) => linking::refine(a),
        Command::Evaluate(a) => linking::evaluate(a),
        Command::Assemble(a) => annotation::assemble(a),
        Command::Agree(a) => annotation::agree(a),
        Command::Serve(a) => annotation::serve(a),
        Command::Export(a) => annotation::export(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn evaluate_parses_cutoff_list() {
        let cli = Cli::try_parse_from(["linkforge", "evaluate", "--pred", "p", "--gold", "g", "--cutoffs", "1,5,10"]).unwrap();
        let Command::Evaluate(a) = cli.command else { panic!() };
        assert_eq!(a.cutoffs, vec![1, 5, 10]);
    }

    #[test]
    fn refine_rejects_unknown_mode() {
        let r = Cli::try_parse_from([
            "linkforge", "refine", "--in", "d", "--llm", "u", "--model", "m", "--out", "o", "--mode", "all",
        ]);
        assert!(r.is_err());
    }
}
