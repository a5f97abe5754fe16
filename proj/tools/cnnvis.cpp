// cnnvis: offline layout, fixture generation, the HTTP service and the
// oracle suite. Exit codes: 0 ok, 1 validation error, 2 internal error.

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "cnnvis/fixture.hpp"
#include "cnnvis/layout.hpp"
#include "cnnvis/server.hpp"
#include "cnnvis/snapshot.hpp"
#include "oracles/verify.hpp"

namespace {

// '-' or empty writes to stdout; parent directories are created as needed.
void emit(const std::string& path, const std::string& body) {
  if (path.empty() || path == "-") {
    std::cout << body << '\n';
    return;
  }
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << body << '\n';
  if (!out) throw std::runtime_error("cannot write " + path);
}

using namespace cnnvis;

int cmd_ingest(const std::string& file, const std::string& store_dir) {
  const auto snap = parse_snapshot(read_file(file));
  if (!store_dir.empty()) SnapshotStore(store_dir).ingest(serialize_snapshot(snap));
  std::cout << "ok " << snap.id() << ": " << snap.layers().size() << " layers, " << snap.neuron_count() << " neurons, "
            << snap.edges().size() << " edges, " << snap.groups().size() << " display layers\n";
  return 0;
}

struct LayoutFlags {
  std::string file, out, facet = "features", edge_facet = "weight", method = "meanshift", classes;
  std::optional<double> tau, stop, bandwidth;
  std::optional<std::size_t> k;
  std::uint64_t seed = 1;
};

int cmd_layout(const LayoutFlags& f) {
  const auto snap = parse_snapshot(read_file(f.file));
  LayoutParams p;
  if (f.method == "kmeans")
    p.method = ClusterMethod::kmeans;
  else if (f.method != "meanshift")
    throw Error(Errc::invalid_argument, "unknown method '" + f.method + "'");
  p.kmeans_k = f.k;
  if (f.k && *f.k < 1) throw Error(Errc::invalid_k, "k must be >= 1");
  p.bandwidth = f.bandwidth;
  if (f.bandwidth && !(*f.bandwidth > 0)) throw Error(Errc::non_positive_bandwidth, "bandwidth must be > 0");
  p.seed = f.seed;
  ViewState v;
  v.facet = facet_from_string(f.facet);
  v.edge_facet = edge_facet_from_string(f.edge_facet);
  v.tau = f.tau;
  v.stop = f.stop;
  std::stringstream ss(f.classes);
  for (std::string name; std::getline(ss, name, ',');) {
    if (name.empty()) continue;
    auto it = std::find(snap.classes().begin(), snap.classes().end(), name);
    if (it == snap.classes().end()) throw Error(Errc::invalid_argument, "unknown class '" + name + "'");
    v.classes.push_back(static_cast<std::size_t>(it - snap.classes().begin()));
  }
  const auto body = layout_to_json(snap, assemble(snap, p, v)).dump(2);
  emit(f.out, body);
  return 0;
}

struct FixtureFlags {
  fixture::FixtureSpec spec;
  std::string loss = "cross-entropy", out;
  bool dead_relu = false;
  bool shape_given = false;
};

int cmd_gen_fixture(FixtureFlags f) {
  if (f.dead_relu) {
    // The preset supplies the shape unless the caller chose one.
    auto preset = fixture::dead_relu_spec(f.spec.seed);
    if (f.shape_given) {
      preset.shape = f.spec.shape;
      preset.input_size = f.spec.input_size;
      preset.classes = f.spec.classes;
      preset.per_class = f.spec.per_class;
    }
    preset.emit.patch_pixels = f.spec.emit.patch_pixels;
    if (f.spec.emit.id != "fixture") preset.emit.id = f.spec.emit.id;
    f.spec = preset;
  }
  if (f.loss == "hinge")
    f.spec.loss = fixture::LossKind::hinge;
  else if (f.loss != "cross-entropy")
    throw Error(Errc::invalid_argument, "unknown loss '" + f.loss + "'");
  const auto fx = fixture::generate(f.spec);
  const auto body = serialize_snapshot(fx.snapshot);
  emit(f.out, body);
  return 0;
}

Server* running = nullptr;

int cmd_serve(const std::string& host, int port, const std::string& data_dir) {
  Server server(data_dir.empty() ? default_data_dir() : std::filesystem::path(data_dir));
  running = &server;
  std::signal(SIGINT, [](int) { if (running) running->stop(); });
  std::signal(SIGTERM, [](int) { if (running) running->stop(); });
  std::cerr << "listening on " << host << ":" << port << '\n';
  if (!server.listen(host, port)) {
    std::cerr << "cannot listen on " << host << ":" << port << '\n';
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CNN snapshot to clustered-DAG visualization engine"};
  app.require_subcommand(1);

  std::string ingest_file, store_dir;
  auto* ingest = app.add_subcommand("ingest", "Validate a snapshot file");
  ingest->add_option("file", ingest_file, "snapshot file")->required();
  ingest->add_option("--store", store_dir, "also store it in this data directory");

  LayoutFlags lf;
  auto* layout = app.add_subcommand("layout", "Write the layout.v1 document for a snapshot");
  layout->add_option("file", lf.file, "snapshot file")->required();
  layout->add_option("--out", lf.out, "output path ('-' for stdout)")->required();
  layout->add_option("--facet", lf.facet, "features | matrix | contribution");
  layout->add_option("--edge-facet", lf.edge_facet, "weight | gradient | relativeChange");
  layout->add_option("--tau", lf.tau, "bicluster tolerance");
  layout->add_option("--stop", lf.stop, "bicluster stop threshold");
  layout->add_option("--method", lf.method, "meanshift | kmeans");
  layout->add_option("--kmeans-k", lf.k, "k for kmeans (implies --method kmeans)");
  layout->add_option("--bandwidth", lf.bandwidth, "meanshift bandwidth");
  layout->add_option("--seed", lf.seed, "clustering seed");
  layout->add_option("--classes", lf.classes, "comma separated class selection");

  FixtureFlags ff;
  auto* gen = app.add_subcommand("gen-fixture", "Generate a snapshot from a seeded toy CNN");
  auto* shape_opt = gen->add_option("--shape", ff.spec.shape, "layer string, e.g. c8k3-r-p-f16-r-f4-o");
  gen->add_option("--input-size", ff.spec.input_size, "input image side");
  gen->add_option("--classes", ff.spec.classes, "class count");
  gen->add_option("--per-class", ff.spec.per_class, "images per class");
  gen->add_option("--seed", ff.spec.seed, "generator seed");
  gen->add_option("--loss", ff.loss, "cross-entropy | hinge");
  gen->add_option("--id", ff.spec.emit.id, "snapshot id");
  gen->add_option("--out", ff.out, "output path ('-' for stdout)");
  gen->add_flag("--dead-relu", ff.dead_relu, "force mostly negative weights past the second weight stage");
  gen->add_flag("--patch-pixels", ff.spec.emit.patch_pixels, "embed patch rasters");

  std::string host = "127.0.0.1", data_dir;
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--port", port, "port");
  serve->add_option("--host", host, "bind address");
  serve->add_option("--data-dir", data_dir, "data directory (default $CNNVIS_DATA_DIR)");

  auto* verify = app.add_subcommand("verify", "Run the oracle suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*ingest) return cmd_ingest(ingest_file, store_dir);
    if (*layout) {
      if (lf.k) lf.method = "kmeans";
      return cmd_layout(lf);
    }
    if (*gen) {
      ff.shape_given = shape_opt->count() > 0;
      return cmd_gen_fixture(ff);
    }
    if (*serve) return cmd_serve(host, port, data_dir);
    if (*verify) return cnnvis::verify::run_all(std::cout) ? 0 : 1;
  } catch (const cnnvis::Error& e) {
    std::cerr << "error: " << cnnvis::to_string(e.code()) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
