//! Library-level pipeline: file → split → model → codes → corpus → metrics,
//! with every on-disk format read back.

use std::fs;

use binllm::codec::{CodeBook, CodeFormat, EntityKind};
use binllm::collab::{encode_all, init_model, load_checkpoint, save_checkpoint, train_binmf, Checkpoint};
use binllm::dataset::{
    binarize_labels, chronological_split, ingest_interactions, load_item_catalog, partition_warm_cold,
    CatalogSchema, InteractionSchema, Partition, SplitRatios, SplitSet,
};
use binllm::eval::{evaluate, read_score_dump, write_score_dump, MetricsReport, Scorer};
use binllm::promptgen::{build_corpus, write_corpus, CorpusMode, CorpusOptions, PromptRecord, PromptTemplate};
use binllm::TrainConfig;

fn write_toy(dir: &std::path::Path) {
    let mut ratings = String::from("user,item,rating,ts\n");
    for k in 0..300u32 {
        let (u, i) = (k % 12, (k * 5 + k / 12) % 30);
        let rating = 1 + (u * 3 + i * 2 + k % 7) % 5;
        ratings.push_str(&format!("u{u},i{i},{rating},{}\n", 100 + k));
    }
    fs::write(dir.join("ratings.csv"), ratings).unwrap();
    let items: String = (0..30).map(|i| format!("i{i},Novel number {i}\n")).collect();
    fs::write(dir.join("items.csv"), items).unwrap();
}

#[test]
fn pipeline_roundtrips_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_toy(root);

    let schema = InteractionSchema {
        has_header: true,
        ..InteractionSchema::csv()
    };
    let rows = ingest_interactions(&root.join("ratings.csv"), &schema).unwrap();
    assert_eq!(rows.len(), 300);
    let split = chronological_split(&binarize_labels(&rows, 3.0), SplitRatios::default()).unwrap();
    assert_eq!((split.train.len(), split.valid.len(), split.test.len()), (240, 30, 30));
    split.save(&root.join("split")).unwrap();
    let split = SplitSet::load(&root.join("split")).unwrap();

    let d = 16;
    let cfg = TrainConfig {
        learning_rate: 0.01,
        batch_size: 32,
        max_epochs: 5,
        ..TrainConfig::with_dim(d)
    };
    let (model, head) = init_model(split.n_users(), split.n_items(), d, 3).unwrap();
    let out = train_binmf(
        model,
        head,
        &split.indexed(Partition::Train),
        &split.indexed(Partition::Valid),
        &cfg,
    )
    .unwrap();
    assert!(!out.log.is_empty() && out.log.len() <= 5);

    // checkpoint: f32 storage, so codes are compared after the roundtrip
    let ckpt = Checkpoint {
        model: out.model,
        head: out.head,
        temperature: cfg.temperature,
    };
    save_checkpoint(&root.join("ckpt.bin"), &ckpt).unwrap();
    let ckpt = load_checkpoint(&root.join("ckpt.bin")).unwrap();
    assert_eq!(ckpt.model.dim(), d);

    let codes = encode_all(&ckpt.model, &ckpt.head).unwrap();
    let book = codes.to_codebook(&split.user_index, &split.item_index).unwrap();
    assert_eq!(book.len(), split.n_users() + split.n_items());
    for format in [CodeFormat::Binary, CodeFormat::DotDecimal] {
        let path = root.join(format!("codes.{format}.tsv"));
        book.write_dump(&path, format).unwrap();
        let (back, fmt) = CodeBook::read_dump(&path).unwrap();
        assert_eq!(fmt, format);
        assert_eq!(back, book);
    }

    let catalog = load_item_catalog(&root.join("items.csv"), &CatalogSchema::csv()).unwrap();
    let tags = partition_warm_cold(&split, 3, 3);
    let template = PromptTemplate::default();
    for mode in [CorpusMode::TextOnly, CorpusMode::Full] {
        let opts = CorpusOptions {
            template: &template,
            mode,
            format: CodeFormat::DotDecimal,
            history_len: 10,
        };
        let records = build_corpus(&split, Partition::Test, Some(&tags), &catalog, Some(&book), &opts).unwrap();
        let path = root.join(format!("test.{mode}.jsonl"));
        write_corpus(&path, &records).unwrap();
        let back: Vec<PromptRecord> = fs::read_to_string(&path)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(back, records);
        assert!(back.iter().all(|r| r.segment.is_some()));
        let first = &records[0];
        let item_code = binllm::codec::render_code(book.get(EntityKind::Item, &first.item_id).unwrap(), CodeFormat::DotDecimal)
            .unwrap();
        assert_eq!(first.prompt.contains(item_code.as_str()), mode == CorpusMode::Full);
    }

    let (report, examples) = evaluate(
        &Scorer::Binmf {
            model: &ckpt.model,
            head: &ckpt.head,
            temperature: ckpt.temperature,
        },
        &split,
        &tags,
    )
    .unwrap();
    assert_eq!(examples.len(), 30);
    assert_eq!(report.segments.len(), 3);
    write_score_dump(&root.join("scores.jsonl"), &examples).unwrap();
    let back = read_score_dump(&root.join("scores.jsonl")).unwrap();
    assert_eq!(back, examples);
    assert_eq!(MetricsReport::from_examples("binmf", &back), report);

    // the code-only scorer needs nothing but the code book
    let (and_report, _) = evaluate(&Scorer::BitAnd(&book), &split, &tags).unwrap();
    assert_eq!(and_report.scorer, "bit_and");
}
