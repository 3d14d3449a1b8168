// Serial reference vs OpenMP kernels on desk-sized inputs.

#include <benchmark/benchmark.h>

#include "cglab/grpo.hpp"
#include "cglab/sft.hpp"

using namespace cglab;

namespace {

struct Fixture {
  VocabSpec vocab;
  RuleSet rules = make_rules(vocab, 3, 1);
  std::vector<BaseSample> corpus = gen_corpus(vocab, rules, 128, 0.5, 2);
  std::vector<TeacherDemo> demos;
  std::vector<SurfaceSample> prompts;
  PolicyParams params{vocab.size()};

  Fixture() {
    prompts = translate_all(corpus, 0, vocab);
    for (const auto& s : prompts) demos.push_back(make_teacher_demo(s, rules, vocab));
    SftConfig c;
    c.epochs = 3;
    params = train_sft(params, demos, c).params;
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

Exec exec_of(const benchmark::State& st) { return st.range(0) ? Exec::kParallel : Exec::kSerial; }

void BM_SampleBatch(benchmark::State& st) {
  const auto& f = fixture();
  std::vector<SampleRequest> req;
  for (size_t i = 0; i < f.prompts.size(); ++i) req.push_back({f.prompts[i].prompt_tokens, i});
  for (auto _ : st) benchmark::DoNotOptimize(sample_batch(f.params, req, 48, 1.0, exec_of(st)));
  st.SetItemsProcessed(st.iterations() * static_cast<long>(req.size()));
}

void BM_SftLoss(benchmark::State& st) {
  const auto& f = fixture();
  for (auto _ : st) benchmark::DoNotOptimize(sft_loss(f.params, f.demos, exec_of(st)));
  st.SetItemsProcessed(st.iterations() * static_cast<long>(f.demos.size()));
}

void BM_GrpoBatchLoss(benchmark::State& st) {
  const auto& f = fixture();
  GrpoConfig c;
  c.exec = exec_of(st);
  std::vector<GroupSample> groups;
  for (int i = 0; i < 16; ++i) groups.push_back(sample_group(f.params, f.prompts[i], 0, c, f.vocab));
  for (auto _ : st) benchmark::DoNotOptimize(grpo_batch_loss(f.params, f.params, f.params, groups, c));
  st.SetItemsProcessed(st.iterations() * 16 * c.group_size);
}

}  // namespace

// Arg 0: serial reference, arg 1: OpenMP.
BENCHMARK(BM_SampleBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SftLoss)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GrpoBatchLoss)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
