#include <benchmark/benchmark.h>

#include <filesystem>
#include <string>

#include "sensorlink/crypto.hpp"
#include "sensorlink/random.hpp"
#include "sensorlink/sim.hpp"
#include "sensorlink/storage.hpp"

using namespace sensorlink;

namespace {

std::string selector(int backend) {
  if (backend == 0) return "memory";
  const auto path = std::filesystem::temp_directory_path() / "sensorlink_bench.db";
  std::filesystem::remove(path);
  return "sqlite:" + path.string();
}

// Writes one minute of the typical workload per iteration, one second per
// call, into a fresh session.
void BM_WriteRows(benchmark::State& state) {
  auto storage = open_storage(selector(static_cast<int>(state.range(0))));
  auto w = WorkloadConfig::typical();
  w.duration_s = 60;
  const auto batches = generate_session(w);
  DeterministicRandom rng(5);
  std::size_t rows = 0;
  std::uint64_t start = 1'400'000'000;
  for (auto _ : state) {
    const auto id = storage->upsert_session(hash_user("bench@example.com"), start++, generate_session_key(rng), 1, {});
    for (const auto& tb : batches) rows += storage->write_rows(id, tb.batch);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(rows));
}
BENCHMARK(BM_WriteRows)->Arg(0)->Arg(1)->ArgNames({"sqlite"})->Unit(benchmark::kMillisecond);

// Replaying an already-stored batch only probes natural keys.
void BM_DuplicateWrite(benchmark::State& state) {
  auto storage = open_storage(selector(static_cast<int>(state.range(0))));
  auto w = WorkloadConfig::typical();
  w.duration_s = 10;
  RowBatch all;
  for (const auto& tb : generate_session(w)) all.append(tb.batch);
  DeterministicRandom rng(6);
  const auto id = storage->upsert_session(hash_user("dup@example.com"), 1'400'000'000, generate_session_key(rng), 1, {});
  storage->write_rows(id, all);
  for (auto _ : state) benchmark::DoNotOptimize(storage->write_rows(id, all));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * all.row_count()));
}
BENCHMARK(BM_DuplicateWrite)->Arg(0)->Arg(1)->ArgNames({"sqlite"});

void BM_ReadSession(benchmark::State& state) {
  auto storage = open_storage(selector(static_cast<int>(state.range(0))));
  auto w = WorkloadConfig::typical();
  w.duration_s = 600;
  DeterministicRandom rng(7);
  const auto id = storage->upsert_session(hash_user("read@example.com"), 1'400'000'000, generate_session_key(rng), 1, {});
  for (const auto& tb : generate_session(w)) storage->write_rows(id, tb.batch);
  for (auto _ : state) benchmark::DoNotOptimize(storage->read_session_rows(id));
}
BENCHMARK(BM_ReadSession)->Arg(0)->Arg(1)->ArgNames({"sqlite"})->Unit(benchmark::kMillisecond);

}  // namespace
