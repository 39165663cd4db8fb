// SPDX-License-Identifier: Apache-2.0
//
// Minimal end-to-end walkthrough: embed a handful of captions with the
// deterministic stub embedder, compact them into a hierarchical bank, then
// retrieve the best matching units for a probe sentence.

#include <iostream>
#include <string>
#include <vector>

#include <hiermem/hiermem.hpp>

int main() {
  using namespace hiermem;

  const std::vector<std::string> captions = {
      "crack two eggs into the bowl",
      "whisk the eggs until smooth",
      "chop the scallions finely",
      "slice the scallions into rings",
      "heat oil in the wok",
      "warm the pan over high heat",
  };

  StubEmbedder embedder(64);
  Corpus corpus;
  corpus.normalized = true;
  corpus.vectors = VectorStore(embedder.dim());
  for (size_t i = 0; i < captions.size(); ++i) {
    corpus.records.push_back({"c" + std::to_string(i), captions[i]});
    corpus.vectors.push_row(embedder.embed(captions[i]));
  }

  MedoidSummarizer summarizer;
  CompactionNotes notes;
  const MemoryBank bank =
      build_bank(corpus, summarizer, notes, BuildBankOptions{});
  std::cout << bank_stats(bank).dump(2) << "\n";

  AnchorSet anchors;
  anchors.anchors = VectorStore(bank.dim);
  anchors.anchors.push_row(embedder.embed("beat the eggs"));
  anchors.source_frame_count = 1;

  RetrievalConfig rc;
  rc.top_k = 2;
  const RetrievalResult result = retrieve(bank, anchors, rc);
  for (const LevelTrace& t : result.per_anchor[0].levels) {
    std::cout << "level " << t.level << " selected:";
    for (uint32_t id : t.selected) {
      std::cout << " [" << bank.level(t.level).texts[id] << "]";
    }
    std::cout << "\n";
  }
  return 0;
}
