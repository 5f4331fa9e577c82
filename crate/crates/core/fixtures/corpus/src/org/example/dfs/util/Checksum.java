package org.example.dfs.util;

public class Checksum {
    private int value;

    public void update(byte[] buf, int off, int len) {
        for (int i = off; i < off + len; i++) {
            value = value * 31 + buf[i];
        }
    }

    public boolean matches(int expected) {
        return value == expected;
    }

    public void reset() {
        value = 0;
    }
}
