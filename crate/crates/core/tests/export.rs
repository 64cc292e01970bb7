use flexid::cag::{schedule_for_intent, GatingConfig};
use flexid::experiment::{evaluate, EvalReport, RunConfig};
use flexid::export::{fmt_g17, report_csv, schedule_csv, summary_csv, trace_csv, write_text, REPORT_COLUMNS};
use flexid::harness::model::ArchConfig;
use flexid::harness::pipeline::{flexid_generate, PipelineOptions};
use flexid::harness::{SamplerConfig, TrainConfig, TrainedStack, WorldConfig};
use flexid::intent::{normalize_prompt, EditDictionary, IntentResult};
use flexid::vfa::ReferenceSpec;
use flexid::Error;

fn stack() -> TrainedStack {
    TrainedStack::untrained(&WorldConfig::default(), &ArchConfig::default(), &TrainConfig::default()).unwrap()
}

fn config() -> RunConfig {
    RunConfig {
        prompt: "a person, \"laughing\" out loud".into(),
        seeds: vec![5, 1, 3],
        sampler: SamplerConfig { steps: 5, ..Default::default() },
        ..Default::default()
    }
}

#[test]
fn trace_files_are_byte_identical() {
    let s = stack();
    let reference = s.reference(ReferenceSpec::HeldOut).unwrap();
    let prompt = normalize_prompt("a person smiling");
    let opts = PipelineOptions { sampler: SamplerConfig { steps: 4, ..Default::default() }, ..Default::default() };
    let dict = EditDictionary::default_dictionary();
    let run =
        || trace_csv(&flexid_generate(&s, &reference, &prompt, &GatingConfig::default(), &dict, &opts, 21).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_text(&a, &run()).unwrap();
    write_text(&b, &run()).unwrap();
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().next().unwrap().ends_with(&format!("x{}", s.dim() - 1)));
}

#[test]
fn trace_last_row_holds_the_final_sample() {
    let s = stack();
    let reference = s.reference(ReferenceSpec::Index(0)).unwrap();
    let opts = PipelineOptions { sampler: SamplerConfig { steps: 3, ..Default::default() }, ..Default::default() };
    let tr = flexid_generate(
        &s,
        &reference,
        &normalize_prompt("x"),
        &GatingConfig::default(),
        &EditDictionary::default_dictionary(),
        &opts,
        2,
    )
    .unwrap();
    let text = trace_csv(&tr);
    let last = text.lines().last().unwrap();
    let tail: Vec<f64> = last.split(',').skip(9).map(|v| v.parse().unwrap()).collect();
    assert_eq!(tail, tr.final_sample);
}

#[test]
fn reports_are_byte_identical_and_quote_prompts() {
    let s = stack();
    let run = || EvalReport::from_records(evaluate(&s, &config(), 0).unwrap());
    let (a, b) = (run(), run());
    assert_eq!(report_csv(&a), report_csv(&b));
    assert_eq!(summary_csv(&a), summary_csv(&b));
    let text = report_csv(&a);
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("0,flexid,\"a person, \"\"laughing\"\" out loud\",1,"), "{row}");
    let seeds: Vec<&str> = text.lines().skip(1).map(|l| l.rsplit(',').nth(4).unwrap()).collect();
    assert_eq!(seeds, ["1", "3", "5"]);
    assert_eq!(text.lines().next().unwrap(), REPORT_COLUMNS.join(","));
}

#[test]
fn schedule_file_layout() {
    let s = schedule_for_intent(&GatingConfig::default(), &IntentResult { indicator: 1, matches: vec![] }, 4).unwrap();
    let text = schedule_csv(&s);
    assert_eq!(text.lines().count(), 5);
    assert_eq!(text.lines().nth(2).unwrap(), format!("1,0.75,1,1.5,0.5,0.75,0.25,{},0.125", fmt_g17(0.1 * 1.5 * 0.75)));
}

#[test]
fn unwritable_path_is_an_io_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("out.csv");
    match write_text(&path, "x\n") {
        Err(e @ Error::Io { .. }) => {
            assert!(e.to_string().contains("out.csv"));
            assert_eq!(e.exit_code(), 2);
        }
        other => panic!("expected an I/O error, got {other:?}"),
    }
}
