import org.slf4j.Logger;
import org.slf4j.LoggerFactory;

public class Shapes {
    private static final Logger LOG = LoggerFactory.getLogger(Shapes.class);

    void ifElse(boolean a) {
        if (a) {
            LOG.info("A");
        } else {
            LOG.info("B");
        }
        LOG.info("C");
    }

    void nested(int x, boolean b) {
        if (x > 0) {
            if (b) {
                LOG.info("positive with b");
            } else {
                LOG.warn("positive without b");
            }
        } else {
            LOG.info("not positive");
        }
    }

    void whileLog(int n) {
        LOG.info("start");
        while (n > 0) {
            LOG.debug("tick");
            n--;
        }
        LOG.info("end");
    }

    void forBreak(int n) {
        for (int i = 0; i < n; i++) {
            if (i == 3) {
                LOG.warn("three");
                break;
            }
            LOG.info("iteration");
        }
    }

    void forContinue(int n) {
        for (int i = 0; i < n; i++) {
            if (i % 2 == 0) {
                continue;
            }
            LOG.info("odd");
        }
    }

    void doWhile(int n) {
        do {
            LOG.info("body");
            n--;
        } while (n > 0);
    }

    void sw(int op) {
        switch (op) {
            case 1:
                LOG.info("one");
                break;
            case 2:
                LOG.info("two");
            case 3:
                LOG.info("two or three");
                break;
            default:
                LOG.error("other");
        }
    }

    void tryCatch() {
        try {
            helper();
            LOG.info("ok");
        } catch (IllegalStateException e) {
            LOG.warn("bad state");
        } finally {
            LOG.debug("cleanup");
        }
    }

    void helper() {
        LOG.info("helper");
    }

    void nestedLoops(int n) {
        for (int i = 0; i < n; i++) {
            for (int j = 0; j < n; j++) {
                LOG.debug("cell");
            }
            LOG.info("row");
        }
    }

    int early(int x) {
        if (x < 0) {
            LOG.warn("negative");
            return -1;
        }
        LOG.info("fine");
        return x;
    }

    void shortCircuit(boolean a, boolean b) {
        if (a && b) {
            LOG.info("both");
        }
    }

    void labeled(int n) {
        outer:
        for (int i = 0; i < n; i++) {
            while (true) {
                LOG.info("inner");
                break outer;
            }
        }
    }

    void throwing(int x) {
        if (x == 0) {
            LOG.error("zero");
            throw new IllegalArgumentException("x");
        }
        LOG.info("nonzero");
    }

    void elseIfChain(int x) {
        if (x == 1) {
            LOG.info("x is one");
        } else if (x == 2) {
            LOG.info("x is two");
        } else {
            LOG.info("x is large");
        }
        helper();
    }
}
