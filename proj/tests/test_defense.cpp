#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "gblab/defense.hpp"
#include "gblab/graph.hpp"

using namespace gblab;

namespace {

// Four nodes on a path with transparent pairwise cosines: 1, 1/sqrt(2), 0.
Graph cosine_path() {
  Mat x(4, 2);
  x << 1, 0, 1, 0, 1, 1, -1, 1;
  Graph g = make_graph(4, x, {0, 0, 1, 1}, 2, {{0, 1}, {1, 2}, {2, 3}});
  g.roles = {Role::TrainLabeled, Role::TrainUnlabeled, Role::TestClean,
             Role::TestTarget};
  return g;
}

Graph small_sbm(Seed seed, double separation) {
  SbmParams p;
  p.blocks = {{20, 0}, {20, 1}};
  p.p_in = 0.3;
  p.p_out = 0.05;
  p.feature_dim = 6;
  p.mean_separation = separation;
  p.noise = separation > 0 ? 0.3 : 1.0;
  p.seed = seed;
  return gen_sbm(p);
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("defense tags round trip") {
  for (DefenseKind k : {DefenseKind::None, DefenseKind::Prune,
                        DefenseKind::OutlierFilter, DefenseKind::RobustScreen})
    CHECK(parse_defense_tag(defense_tag(k)) == k);
  CHECK(std::string(defense_tag(DefenseKind::OutlierFilter)) == "od");
  CHECK(std::string(defense_tag(DefenseKind::RobustScreen)) == "rigbd");
  CHECK_THROWS_AS(parse_defense_tag("gaussian"), std::runtime_error);
}

TEST_CASE("prune removes exactly the edges below the cosine threshold") {
  Graph g = cosine_path();

  SUBCASE("explicit threshold") {
    PruneConfig cfg;
    cfg.threshold = 0.5;
    DefenseReport rep;
    Graph d = prune_edges(g, cfg, &rep);
    CHECK(d.num_nodes == 4);
    CHECK(d.edge_list() ==
          std::vector<std::pair<int, int>>{{0, 1}, {1, 2}});
    CHECK(d.labels == g.labels);
    CHECK(d.roles == g.roles);
    CHECK(d.features == g.features);

    // Scores are negated worst incident cosines; flags mark the endpoints of
    // removed edges.
    CHECK(rep.score[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(rep.score[1] == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(rep.score[2] == 0.0);
    CHECK(rep.score[3] == 0.0);
    CHECK(rep.flagged == std::vector<char>{0, 0, 1, 1});
  }

  SUBCASE("default threshold is the graph's own 5th percentile") {
    // Nearest-rank 5th percentile of {0, 1/sqrt(2), 1} is 0, and pruning is
    // strict, so every edge survives.
    DefenseReport rep;
    Graph d = prune_edges(g, PruneConfig{}, &rep);
    CHECK(d.num_edges == 3);
    CHECK(rep.flagged == std::vector<char>{0, 0, 0, 0});
  }

  SUBCASE("threshold above every cosine empties the edge set") {
    PruneConfig cfg;
    cfg.threshold = 1.1;
    Graph d = prune_edges(g, cfg, nullptr);
    CHECK(d.num_edges == 0);
    CHECK(d.num_nodes == 4);
  }

  SUBCASE("edgeless graphs pass through") {
    Graph lone = make_graph(3, Mat::Ones(3, 2), {0, 1, 0}, 2, {});
    Graph d = prune_edges(lone, PruneConfig{}, nullptr);
    CHECK(d.num_edges == 0);
    CHECK(d.num_nodes == 3);
  }
}

TEST_CASE("outlier filter removes a planted far-out node first") {
  Graph g = small_sbm(11, 1.5);
  const int n = g.num_nodes;
  Mat x(n + 1, g.dim());
  x.topRows(n) = g.features;
  x.row(n).setConstant(20.0);
  std::vector<int> labels = g.labels;
  labels.push_back(0);
  Graph g2 = make_graph(n + 1, x, labels, 2, g.edge_list());

  OdConfig cfg;
  cfg.remove_frac = 1.0 / (n + 1);
  cfg.seed = 3;
  DefenseReport rep;
  Graph d = od_filter(g2, cfg, &rep);

  CHECK(d.num_nodes == n);
  CHECK(rep.flagged[n] == 1);
  int flagged = 0;
  for (char f : rep.flagged) flagged += f;
  CHECK(flagged == 1);
  for (int v = 0; v < n; ++v) CHECK(rep.score[n] > rep.score[v]);
  // Only the appended node went, so the survivors keep their rows verbatim.
  CHECK(d.features == g.features);

  SUBCASE("zero removal fraction is the identity") {
    OdConfig none = cfg;
    none.remove_frac = 0.0;
    Graph d0 = od_filter(g2, none, nullptr);
    CHECK(d0.num_nodes == g2.num_nodes);
    CHECK(d0.edge_list() == g2.edge_list());
  }

  SUBCASE("the same seed reproduces the same scores") {
    DefenseReport again;
    od_filter(g2, cfg, &again);
    CHECK(again.score == rep.score);
    CHECK(again.flagged == rep.flagged);
  }

  SUBCASE("bad layer sizes are rejected") {
    OdConfig bad = cfg;
    bad.hidden = 0;
    CHECK_THROWS_AS(od_filter(g2, bad, nullptr), std::invalid_argument);
  }
}

TEST_CASE("stability screen mechanics") {
  Graph g = split_dataset(small_sbm(21, 0.0), 22);

  SUBCASE("no edge drops means no flips and no removals") {
    RigbdConfig cfg;
    cfg.p_drop = 0.0;
    cfg.rounds = 5;
    cfg.seed = 4;
    DefenseReport rep;
    Graph d = rigbd_screen(g, cfg, &rep);
    CHECK(d.num_nodes == g.num_nodes);
    CHECK(d.edge_list() == g.edge_list());
    for (double s : rep.score) CHECK(s == 0.0);
    for (char f : rep.flagged) CHECK(f == 0);
  }

  SUBCASE("dropping every edge makes flip rates exactly zero or one") {
    // Each round then scores the same edgeless graph, so a node either always
    // flips or never does.
    RigbdConfig cfg;
    cfg.p_drop = 1.0;
    cfg.rounds = 10;
    cfg.seed = 4;
    DefenseReport rep;
    rigbd_screen(g, cfg, &rep);
    for (double s : rep.score) CHECK((s == 0.0 || s == 1.0));
  }

  SUBCASE("structure-dependent predictions get screened") {
    // With uninformative feature means the model leans on propagation, so
    // heavy edge dropping flips predictions often enough to cross kappa.
    SbmParams p;
    p.blocks = {{30, 0}, {30, 1}};
    p.p_in = 0.3;
    p.p_out = 0.02;
    p.feature_dim = 6;
    p.mean_separation = 0.0;
    p.noise = 1.0;
    p.seed = 21;
    Graph gs = split_dataset(gen_sbm(p), 22);
    RigbdConfig cfg;
    cfg.seed = 0;
    DefenseReport rep;
    Graph d = rigbd_screen(gs, cfg, &rep);
    int flagged = 0;
    for (char f : rep.flagged) flagged += f;
    CHECK(flagged > 0);
    CHECK(d.num_nodes == gs.num_nodes - flagged);

    // Every removed node either crossed the flip-rate bar itself or hangs off
    // a flagged node by a single edge.
    for (int v = 0; v < gs.num_nodes; ++v) {
      if (!rep.flagged[v]) continue;
      bool own = rep.score[v] >= cfg.kappa;
      bool tethered = false;
      if (gs.degree(v) == 1)
        for (int w : gs.neighbors(v)) tethered = rep.flagged[w];
      CHECK((own || tethered));
    }

    DefenseReport again;
    rigbd_screen(gs, cfg, &again);
    CHECK(again.score == rep.score);
    CHECK(again.flagged == rep.flagged);
  }

  SUBCASE("zero rounds are rejected") {
    RigbdConfig cfg;
    cfg.rounds = 0;
    CHECK_THROWS_AS(rigbd_screen(g, cfg, nullptr), std::invalid_argument);
  }
}

TEST_CASE("apply_defense dispatches to the matching sanitizer") {
  Graph g = split_dataset(small_sbm(31, 1.5), 32);

  SUBCASE("none is the identity with an all-zero report") {
    DefenseReport rep;
    Graph d = apply_defense(g, DefenseKind::None, 1, &rep);
    CHECK(d.features == g.features);
    CHECK(d.edge_list() == g.edge_list());
    CHECK(d.roles == g.roles);
    CHECK(rep.score == std::vector<double>(g.num_nodes, 0.0));
    CHECK(rep.flagged == std::vector<char>(g.num_nodes, 0));
  }

  SUBCASE("prune matches the direct call at defaults") {
    DefenseReport a, b;
    Graph da = apply_defense(g, DefenseKind::Prune, 1, &a);
    Graph db = prune_edges(g, PruneConfig{}, &b);
    CHECK(da.edge_list() == db.edge_list());
    CHECK(a.score == b.score);
    CHECK(a.flagged == b.flagged);
  }

  SUBCASE("outlier filter and stability screen forward the seed") {
    DefenseReport a, b;
    Graph da = apply_defense(g, DefenseKind::OutlierFilter, 9, &a);
    OdConfig oc;
    oc.seed = 9;
    Graph db = od_filter(g, oc, &b);
    CHECK(a.score == b.score);
    CHECK(da.num_nodes == db.num_nodes);

    DefenseReport c, e;
    Graph dc = apply_defense(g, DefenseKind::RobustScreen, 9, &c);
    RigbdConfig rc;
    rc.seed = 9;
    Graph de = rigbd_screen(g, rc, &e);
    CHECK(c.score == e.score);
    CHECK(dc.num_nodes == de.num_nodes);
  }
}

TEST_CASE("defense reports serialize one row per node") {
  DefenseReport rep;
  rep.score = {-1.0, 0.5, 0.0};
  rep.flagged = {0, 1, 0};
  const std::string path = "/tmp/gblab_defense_report.csv";
  write_defense_report(rep, path);
  CHECK(slurp(path) == "node_id,score,flagged\n0,-1,0\n1,0.5,1\n2,0,0\n");
  std::remove(path.c_str());

  DefenseReport ragged;
  ragged.score = {1.0};
  CHECK_THROWS_AS(write_defense_report(ragged, path), std::invalid_argument);
  CHECK_THROWS_AS(write_defense_report(rep, "/no_such_dir/report.csv"),
                  std::runtime_error);
}
