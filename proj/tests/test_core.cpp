#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "dolphin/grammar.hpp"
#include "dolphin/image.hpp"
#include "dolphin/markdown.hpp"
#include "dolphin/preprocess.hpp"
#include "dolphin/types.hpp"

using namespace dolphin;

TEST_CASE("element type tags round-trip") {
  CHECK(all_element_types().size() == 15);
  for (ElementType t : all_element_types())
    CHECK(element_type_parse(element_type_tag(t)) == t);
  CHECK(element_type_tag(ElementType::sub_sec) == "sub_sec");
  CHECK_THROWS_AS(element_type_parse("paragraph"), UnknownElementType);
  CHECK(!element_type_try_parse("Para").has_value());
  CHECK(element_type_try_parse("tab") == ElementType::tab);
}

TEST_CASE("bounding box validity and iou") {
  CHECK(BoundingBox{0, 0, 10, 10}.valid(10));
  CHECK(!BoundingBox{0, 0, 10, 11}.valid(10));
  CHECK(!BoundingBox{5, 0, 5, 10}.valid(10));
  CHECK(!BoundingBox{-1, 0, 5, 10}.valid(10));
  CHECK(iou({0, 0, 10, 10}, {0, 0, 10, 10}) == doctest::Approx(1.0));
  CHECK(iou({0, 0, 10, 10}, {20, 20, 30, 30}) == doctest::Approx(0.0));
  CHECK(iou({0, 0, 10, 10}, {5, 0, 15, 10}) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("layout sequence order invariant") {
  LayoutSequence seq;
  seq.elements.push_back({ElementType::para, {0, 0, 10, 10}, 0});
  seq.elements.push_back({ElementType::sec, {0, 20, 10, 30}, 1});
  CHECK(seq.valid(100));
  seq.elements[1].order_index = 2;  // gap
  CHECK(!seq.valid(100));
}

TEST_CASE("prompt strings are canonical") {
  CHECK(Prompt::layout().text == "Parse the reading order of this document.");
  CHECK(Prompt::paragraph().text == "Read text in the image.");
  CHECK(Prompt::table().text == "Parse the table in the image.");
  CHECK(Prompt::spotting().text ==
        "Detect and recognize all the text lines in the image.");
  CHECK(Prompt::box_query({1, 2, 3, 4}).text ==
        "Read the text in the image within the specified box [1,2,3,4].");
  for (ElementType t : all_element_types()) {
    if (t == ElementType::tab)
      CHECK(prompt_for(t).kind == PromptKind::Table);
    else
      CHECK(prompt_for(t).kind == PromptKind::Paragraph);
  }
}

TEST_CASE("parsed document json round-trips with fixed field names") {
  ParsedDocument doc;
  doc.page_w = 640;
  doc.page_h = 480;
  ParsedElement pe;
  pe.element = {ElementType::tab, {1, 2, 30, 40}, 0};
  pe.content = "<table><tr><td>x</td></tr></table>";
  pe.content_format = ContentFormat::Html;
  doc.elements.push_back(pe);
  doc.timing.stage1_ms = 1.5;
  doc.timing.stage2_ms = 2.5;

  const std::string j = to_json(doc);
  for (const char* key : {"\"page_w\"", "\"page_h\"", "\"elements\"", "\"type\"",
                          "\"bbox\"", "\"order\"", "\"format\"", "\"content\"",
                          "\"timing\"", "\"stage1_ms\"", "\"stage2_ms\""})
    CHECK(j.find(key) != std::string::npos);

  const ParsedDocument back = parsed_document_from_json(j);
  CHECK(back.page_w == 640);
  REQUIRE(back.elements.size() == 1);
  CHECK(back.elements[0].element == pe.element);
  CHECK(back.elements[0].content == pe.content);
  CHECK(back.elements[0].content_format == ContentFormat::Html);
  CHECK(back.timing.stage2_ms == doctest::Approx(2.5));
}

TEST_CASE("resize_pad geometry") {
  SUBCASE("landscape page pads the bottom") {
    PageImage img(1000, 800, 1, 0);
    auto [frame, tf] = resize_pad(img, 896);
    CHECK(frame.width == 896);
    CHECK(frame.height == 896);
    CHECK(tf.scale == doctest::Approx(0.896));
    CHECK(tf.pad_right == 0);
    CHECK(tf.pad_bottom == 896 - 717);  // round_half_up(800 * 0.896) = 717
    CHECK(tf.content_height() == 717);
    // padding must be white
    CHECK(frame.at(10, 890) == 255);
    // content region comes from the (dark) source
    CHECK(frame.at(10, 10) == 0);
  }
  SUBCASE("square page is identity-scaled") {
    PageImage img(256, 256, 1, 128);
    auto [frame, tf] = resize_pad(img, 256);
    CHECK(tf.scale == doctest::Approx(1.0));
    CHECK(tf.pad_right == 0);
    CHECK(tf.pad_bottom == 0);
    CHECK(frame == img);
  }
  SUBCASE("tiny frame is rejected") {
    PageImage img(100, 100, 1);
    CHECK_THROWS_AS(resize_pad(img, 4), DegenerateImage);
  }
}

TEST_CASE("to_model_frame quantization") {
  FrameTransform tf;
  tf.scale = 0.896;
  tf.frame_size = 896;
  tf.src_width = 1000;
  tf.src_height = 800;
  tf.pad_bottom = 896 - 717;
  const BoundingBox b = to_model_frame({100, 100, 200, 200}, tf);
  CHECK(b == BoundingBox{90, 90, 179, 179});

  SUBCASE("sub-pixel boxes collapse") {
    FrameTransform small = tf;
    small.scale = 0.01;
    CHECK_THROWS_AS(to_model_frame({100, 100, 130, 140}, small), EmptyAfterQuantization);
  }
  SUBCASE("quantization error is bounded by half a pixel") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 2000; ++i) {
      const int x1 = int(rng() % 900), y1 = int(rng() % 700);
      const int x2 = x1 + 2 + int(rng() % 90), y2 = y1 + 2 + int(rng() % 90);
      BoundingBox b2;
      try {
        b2 = to_model_frame({x1, y1, x2, y2}, tf);
      } catch (const EmptyAfterQuantization&) {
        continue;
      }
      CHECK(std::abs(b2.x1 - x1 * tf.scale) <= 0.5 + 1e-9);
      CHECK(std::abs(b2.y2 - y2 * tf.scale) <= 0.5 + 1e-9);
      CHECK(b2.valid(tf.frame_size));
      // round trip back to source coordinates within one source pixel
      const SrcRect r = from_model_frame(b2, tf);
      CHECK(std::abs(r.x1 - x1) <= 1.0 / tf.scale + 1.0);
      CHECK(std::abs(r.y2 - y2) <= 1.0 / tf.scale + 1.0);
    }
  }
}

TEST_CASE("crop_element bounds handling") {
  PageImage page(300, 200, 1, 200);
  auto [frame, tf] = resize_pad(page, 128);
  SUBCASE("valid crop comes back at frame size") {
    auto [crop, ct] = crop_element(page, tf, {10, 10, 60, 40});
    CHECK(crop.width == 128);
    CHECK(crop.height == 128);
    CHECK(ct.frame_size == 128);
  }
  SUBCASE("overreach beyond tolerance throws") {
    BoundingBox outside{0, 0, 128, 128};
    // y extent maps past the content region by far more than one pixel
    outside.y1 = tf.content_height() + 20;
    outside.y2 = 128;
    CHECK_THROWS_AS(crop_element(page, tf, outside), OutOfBounds);
  }
}

TEST_CASE("vocabulary basics") {
  const Vocabulary v = Vocabulary::builtin();
  CHECK(v.size() < 600);
  CHECK(v.token_of(kBos) == "<bos>");
  CHECK(v.token_of(kEos) == "<eos>");
  CHECK(v.token_of(kPad) == "<pad>");
  CHECK(v.token_of(kSep) == "<sep>");

  SUBCASE("markup tokens match greedily") {
    const auto ids = v.encode_text("<table>");
    REQUIRE(ids.size() == 3);  // bos + one token + eos
    CHECK(v.token_of(ids[1]) == "<table>");
  }
  SUBCASE("text round-trips") {
    const std::string s = "Sec 1.2: a+b=c $\\frac{x}{y}$\nnext\tline";
    CHECK(v.decode_tokens(v.encode_text(s)) == s);
  }
  SUBCASE("specials are never produced from text") {
    const auto ids = v.encode_text("<bos>");
    for (size_t i = 1; i + 1 < ids.size(); ++i) CHECK(ids[i] >= 4);
    CHECK(v.decode_tokens(ids) == "<bos>");
  }
  SUBCASE("untokenizable byte reports its offset") {
    try {
      v.encode_text(std::string("ab\x80z"));
      FAIL("expected UntokenizableInput");
    } catch (const UntokenizableInput& e) {
      CHECK(e.offset == 2);
    }
  }
  SUBCASE("save/load round-trips") {
    const std::string path =
        (std::filesystem::temp_directory_path() / "vocab_test.txt").string();
    v.save(path);
    const Vocabulary w = Vocabulary::load(path);
    CHECK(w.size() == v.size());
    CHECK(w.token_of(77) == v.token_of(77));
    std::filesystem::remove(path);
  }
}

TEST_CASE("layout markup round-trip and tolerance") {
  LayoutSequence seq;
  seq.elements.push_back({ElementType::sec, {8, 8, 120, 30}, 0});
  seq.elements.push_back({ElementType::para, {8, 40, 248, 100}, 1});
  const std::string text = serialize_layout(seq);
  CHECK(text == "sec\t8,8,120,30\npara\t8,40,248,100");
  CHECK(parse_layout(text, 256) == seq);

  SUBCASE("malformed lines are skipped with warnings") {
    std::vector<ParseWarning> warnings;
    const auto parsed = parse_layout("sec\t8,8,120,30\njunk line\npara\t8,40,248,100",
                                     256, &warnings);
    CHECK(parsed.size() == 2);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].kind == WarningKind::MalformedLine);
    CHECK(warnings[0].line_no == 2);
    CHECK(parsed.valid(256));  // order indices renumbered consecutively
  }
  SUBCASE("invalid boxes are dropped with warnings") {
    std::vector<ParseWarning> warnings;
    const auto parsed = parse_layout("sec\t8,8,4,30\npara\t0,0,10,10", 256, &warnings);
    CHECK(parsed.size() == 1);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].kind == WarningKind::InvalidBox);
  }
  SUBCASE("fuzz never throws") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 3000; ++i) {
      std::string s(rng() % 120, '\0');
      for (auto& c : s) c = char(rng() & 0xFF);
      CHECK_NOTHROW(parse_layout(s, 256));
      CHECK_NOTHROW(parse_spotting(s, 256));
    }
  }
}

TEST_CASE("spotting markup round-trip") {
  std::vector<SpottedLine> lines{{{10, 10, 100, 24}, "hello world"},
                                 {{10, 30, 90, 44}, "line two"}};
  const std::string text = serialize_spotting(lines);
  CHECK(text == "line\t10,10,100,24\thello world\nline\t10,30,90,44\tline two");
  CHECK(parse_spotting(text, 256) == lines);
}

TEST_CASE("image io round-trips") {
  const std::string dir = std::filesystem::temp_directory_path().string();
  PageImage img(37, 23, 1);
  std::mt19937_64 rng(5);
  for (auto& p : img.data) p = uint8_t(rng() & 0xFF);

  SUBCASE("png") {
    write_png(dir + "/t.png", img);
    CHECK(read_image(dir + "/t.png") == img);
  }
  SUBCASE("pgm") {
    write_pnm(dir + "/t.pgm", img);
    CHECK(read_image(dir + "/t.pgm") == img);
  }
  SUBCASE("rgb to gray uses the luma weights") {
    PageImage rgb(1, 1, 3);
    rgb.data = {200, 100, 50};
    // round(0.299*200 + 0.587*100 + 0.114*50) = round(124.2) = 124
    CHECK(rgb.to_gray().at(0, 0) == 124);
  }
  SUBCASE("missing file throws") {
    CHECK_THROWS_AS(read_image(dir + "/definitely_missing_image.png"), ImageIoError);
  }
}

TEST_CASE("markdown assembly mapping") {
  ParsedDocument doc;
  auto push = [&doc](ElementType t, const std::string& content) {
    ParsedElement pe;
    pe.element = {t, {0, 0, 10, 10}, int(doc.elements.size())};
    pe.content = content;
    doc.elements.push_back(pe);
  };
  push(ElementType::title, "Title");
  push(ElementType::header, "running head");
  push(ElementType::sec, "Intro");
  push(ElementType::para, "Body text.");
  push(ElementType::fig, "");
  push(ElementType::alg, "step 1");
  push(ElementType::foot, "page 3");
  CHECK(assemble_markdown(doc) ==
        "# Title\n\n## Intro\n\nBody text.\n\n![fig](#)\n\n```\nstep 1\n```");
}
