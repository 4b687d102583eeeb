#include <gtest/gtest.h>

#include <thread>

#include "buscbm/http.hpp"
#include "buscbm/service.hpp"

using namespace buscbm;

namespace {

HeadModel linear_head(std::array<double, 5> w, double bias) {
  HeadModel h;
  h.config.variant = HeadVariant::linear;
  h.params = zero_params(h.config);
  for (std::size_t i = 0; i < 5; ++i) h.params.layers[0].weights[i] = w[i];
  h.params.layers[0].bias[0] = bias;
  return h;
}

std::shared_ptr<const SessionBundle> bundle(std::vector<NamedHead> heads) {
  std::vector<ImageEval> images;
  for (int i = 0; i < 45; ++i) {
    ImageEval im;
    im.image_id = "img" + std::to_string(100 + i);
    LesionAnnotation l;
    l.lesion_id = "L" + std::to_string(i);
    l.bbox = {0, 0, 8, 8};
    l.descriptor.shape = Shape::irregular;
    im.ground_truths.push_back(l);
    Detection d;
    d.image_id = im.image_id;
    d.bbox = {0, 0, 8, 8};
    d.score = 0.75;
    d.concept_logits = ConceptLogits{{-2.0, 0.5 * i / 45.0, -1.0, 1.0, -0.25}};
    im.detections.push_back(d);
    images.push_back(im);
  }
  // Served sorted by id regardless of input order.
  std::reverse(images.begin(), images.end());
  return std::make_shared<const SessionBundle>(std::move(images), std::move(heads));
}

Service loaded_service() {
  return Service(bundle({{"linear", linear_head({0.5, -0.25, 1.0, 0.75, 0.1}, -0.2)},
                         {"zero", linear_head({0, 0, 0, 0, 0}, 0.0)}}));
}

}  // namespace

TEST(Service, HealthzReflectsLoadState) {
  EXPECT_EQ(Service().healthz().status, 503);
  EXPECT_EQ(Service().list_cases({}, {}).status, 503);
  const auto r = loaded_service().healthz();
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body["images"], 45);
  EXPECT_EQ(r.body["heads"], (Json{"linear", "zero"}));
}

TEST(Service, ListCasesPages) {
  const auto s = loaded_service();
  const auto first = s.list_cases({}, {});
  EXPECT_EQ(first.body["total"], 45);
  ASSERT_EQ(first.body["cases"].size(), 20u);
  EXPECT_EQ(first.body["cases"][0]["image_id"], "img100");
  const auto last = s.list_cases(std::string("3"), {});
  ASSERT_EQ(last.body["cases"].size(), 5u);
  EXPECT_EQ(last.body["cases"][4]["image_id"], "img144");
  EXPECT_TRUE(s.list_cases(std::string("9"), {}).body["cases"].empty());
  EXPECT_EQ(s.list_cases(std::string("2"), std::string("7")).body["cases"][0]["image_id"], "img107");
  for (const char* bad : {"0", "-1", "x", "", "1.5"}) EXPECT_EQ(s.list_cases(std::string(bad), {}).status, 400) << bad;
  EXPECT_EQ(s.list_cases({}, std::string("201")).status, 400);
}

TEST(Service, GetCaseMatchesLibraryForward) {
  const auto s = loaded_service();
  EXPECT_EQ(s.get_case("nope").status, 404);
  const auto r = s.get_case("img110");
  ASSERT_EQ(r.status, 200);
  const auto& lesion = r.body["lesions"][0];
  const ConceptLogits logits{{-2.0, 0.5 * 10 / 45.0, -1.0, 1.0, -0.25}};
  const auto head = linear_head({0.5, -0.25, 1.0, 0.75, 0.1}, -0.2);
  EXPECT_DOUBLE_EQ(lesion["cancer_prob"]["linear"].get<double>(), forward(head.params, head.config, logits, {}));
  EXPECT_DOUBLE_EQ(lesion["cancer_prob"]["zero"].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(lesion["concept_probs"]["shape"].get<double>(), sigmoid(-2.0));
  EXPECT_EQ(r.body["ground_truths"][0]["lesion_id"], "L10");
}

TEST(Service, InterveneMinimalFlipsToTarget) {
  const auto s = loaded_service();
  const auto r = s.intervene(R"({"image_id":"img100","lesion_index":0,"edits":{"shape":true,"margin":false}})");
  ASSERT_EQ(r.status, 200) << r.body.dump();
  EXPECT_NEAR(r.body["corrected_logits"][0].get<double>(), 0.040005, 5e-7);
  EXPECT_EQ(r.body["corrected_logits"][2].get<double>(), -1.0);
  EXPECT_EQ(r.body["log"][0]["changed"], true);
  EXPECT_EQ(r.body["log"][2]["changed"], false);
  EXPECT_GT(r.body["cancer_prob"]["linear"].get<double>(), r.body["original_cancer_prob"]["linear"].get<double>());

  const auto down = s.intervene(R"({"image_id":"img100","lesion_index":0,"edits":{"echo_pattern":false}})");
  EXPECT_NEAR(down.body["corrected_logits"][3].get<double>(), -0.040005, 5e-7);

  const auto maxi = s.intervene(R"({"image_id":"img100","lesion_index":0,"edits":{"shape":true},"strategy":"maximal"})");
  EXPECT_NEAR(sigmoid(maxi.body["corrected_logits"][0].get<double>()), 0.99, 1e-12);

  const auto prob = s.intervene(R"({"image_id":"img100","lesion_index":0,"edits":{"posterior":0.8}})");
  EXPECT_DOUBLE_EQ(prob.body["corrected_logits"][4].get<double>(), logit(0.8));
}

TEST(Service, InterveneWithoutEditsEchoesTheCase) {
  const auto s = loaded_service();
  const auto r = s.intervene(R"({"image_id":"img101","lesion_index":0})");
  ASSERT_EQ(r.status, 200);
  const auto c = s.get_case("img101");
  EXPECT_EQ(r.body["corrected_logits"], c.body["lesions"][0]["concept_logits"]);
  EXPECT_EQ(r.body["cancer_prob"], c.body["lesions"][0]["cancer_prob"]);
}

TEST(Service, InterveneRejectsBadRequests) {
  const auto s = loaded_service();
  EXPECT_EQ(s.intervene("{").status, 400);
  EXPECT_EQ(s.intervene("[]").status, 400);
  EXPECT_EQ(s.intervene(R"({"lesion_index":0})").status, 400);
  EXPECT_EQ(s.intervene(R"({"image_id":"nope","lesion_index":0})").status, 404);
  EXPECT_EQ(s.intervene(R"({"image_id":"img100","lesion_index":3})").status, 404);
  EXPECT_EQ(s.intervene(R"({"image_id":"img100","lesion_index":0,"edits":{"shape":1.0}})").status, 400);
  EXPECT_EQ(s.intervene(R"({"image_id":"img100","lesion_index":0,"edits":{"shape":0}})").status, 400);
  EXPECT_EQ(s.intervene(R"({"image_id":"img100","lesion_index":0,"edits":{"colour":true}})").status, 400);
  EXPECT_EQ(s.intervene(R"({"image_id":"img100","lesion_index":0,"edits":{"shape":"yes"}})").status, 400);
  EXPECT_EQ(s.intervene(R"({"image_id":"img100","lesion_index":0,"strategy":"full"})").status, 400);
}

TEST(Service, Predict) {
  const auto s = loaded_service();
  const auto z = s.predict(R"({"concept_logits":[3,-1,2,0,5],"variant":"zero"})");
  ASSERT_EQ(z.status, 200);
  EXPECT_EQ(z.body["cancer_prob"].get<double>(), 0.5);
  const auto l = s.predict(R"({"concept_logits":[1,1,1,1,1],"variant":"linear"})");
  EXPECT_DOUBLE_EQ(l.body["cancer_prob"].get<double>(), sigmoid(0.5 - 0.25 + 1.0 + 0.75 + 0.1 - 0.2));
  EXPECT_EQ(s.predict(R"({"concept_logits":[1,1,1,1],"variant":"zero"})").status, 400);
  EXPECT_EQ(s.predict(R"({"concept_logits":[1,1,1,1,"a"],"variant":"zero"})").status, 400);
  EXPECT_EQ(s.predict(R"({"concept_logits":[1,1,1,1,1]})").status, 400);
  EXPECT_EQ(s.predict(R"({"concept_logits":[1,1,1,1,1],"variant":"side"})").status, 404);
  // Heads without a side network ignore side features.
  EXPECT_EQ(s.predict(R"({"concept_logits":[1,1,1,1,1],"side_features":[1],"variant":"zero"})").body["cancer_prob"], 0.5);
  EXPECT_EQ(s.predict(R"({"concept_logits":[1,1,1,1,1],"side_features":["x"],"variant":"zero"})").status, 400);

  const Service single(bundle({{"zero", linear_head({0, 0, 0, 0, 0}, 0.0)}}));
  EXPECT_EQ(single.predict(R"({"concept_logits":[0,0,0,0,0]})").body["variant"], "zero");
}

TEST(Service, BundleRejectsDuplicates) {
  std::vector<ImageEval> images(2);
  images[0].image_id = images[1].image_id = "same";
  EXPECT_THROW(SessionBundle(images, {}), InputError);
  EXPECT_THROW(SessionBundle({}, {{"h", linear_head({}, 0)}, {"h", linear_head({}, 0)}}), InputError);
}

TEST(Http, ServesTheApiOverSockets) {
  const Service service = loaded_service();
  httplib::Server server;
  mount_service(server, service);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/healthz");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(health->get_header_value("Access-Control-Allow-Origin"), "*");

  auto cases = client.Get("/api/cases?page=2&page_size=10");
  ASSERT_TRUE(cases);
  EXPECT_EQ(Json::parse(cases->body)["cases"][0]["image_id"], "img110");
  EXPECT_EQ(client.Get("/api/cases?page=0")->status, 400);
  EXPECT_EQ(client.Get("/api/cases/img999")->status, 404);
  EXPECT_EQ(client.Get("/api/cases/img105")->status, 200);

  auto iv = client.Post("/api/intervene", R"({"image_id":"img100","lesion_index":0,"edits":{"shape":true}})",
                        "application/json");
  ASSERT_TRUE(iv);
  EXPECT_NEAR(Json::parse(iv->body)["corrected_logits"][0].get<double>(), 0.040005, 5e-7);
  auto pr = client.Post("/api/predict", R"({"concept_logits":[0,0,0,0,0],"variant":"zero"})", "application/json");
  ASSERT_TRUE(pr);
  EXPECT_EQ(Json::parse(pr->body)["cancer_prob"], 0.5);

  server.stop();
  t.join();
}
